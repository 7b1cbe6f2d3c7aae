"""
Django management command to fit the topic model and infer per-image topics.
"""

import numpy as np

from app.exceptions import InputDataError
from app.management.base import PipelineCommand
from app.services.topic_service import TopicService

TOP_LABELS = 10


class Command(PipelineCommand):
    """Command to fit LDA on every camera's tf-idf rows."""

    help = "Fit LDA with online variational Bayes; writes topic_model.json and theta/"

    config_options = {
        "topics": "topics",
        "alpha": "alpha",
        "beta": "beta",
        "passes": "passes",
        "batch_size": "batch_size",
    }
    seed_key = "fit_seed"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--topics",
            type=int,
            default=None,
            help="Number of topics K (default: 20)",
        )
        parser.add_argument(
            "--from-selection",
            action="store_true",
            help="Use K* from a previous select_k run",
        )
        parser.add_argument("--alpha", type=float, default=None, help="Default: 50/K")
        parser.add_argument("--beta", type=float, default=None, help="Default: 0.1")
        parser.add_argument("--passes", type=int, default=None)
        parser.add_argument("--batch-size", type=int, default=None)
        parser.add_argument(
            "--monitor-elbo",
            action="store_true",
            help="Record the variational bound after every pass",
        )

    def run(self, config, artifacts, **options):
        topic_service = TopicService(
            max_iterations=config.max_iterations, tol=config.tolerance
        )
        K = config.topics
        if options.get("from_selection"):
            K = artifacts.read_json(artifacts.require("selection.json"))["k_star"]
            if K is None:
                raise InputDataError("selection.json has no K*; rerun select_k")

        vocab = artifacts.read_vocabulary()
        matrices = {camera: artifacts.read_matrix(camera) for camera in artifacts.cameras()}
        for matrix in matrices.values():
            if matrix.M != vocab.M:
                raise InputDataError(
                    f"Matrix for {matrix.camera_id} has M={matrix.M}, vocabulary has {vocab.M}"
                )
        corpus = [bag for matrix in matrices.values() for bag in matrix.rows]

        self.stdout.write(f"Fitting K={K} topics on {len(corpus)} documents...")
        model = topic_service.fit_online_vb(
            corpus,
            K=K,
            M=vocab.M,
            alpha=config.alpha,
            beta=config.beta,
            batch_size=config.batch_size,
            passes=config.passes,
            seed=config.fit_seed,
            kappa=config.kappa,
            tau0=config.tau0,
            vocab_hash=vocab.vocab_hash,
            monitor_elbo=options.get("monitor_elbo", False),
        )
        artifacts.write_topic_model(
            model,
            top_labels=topic_service.top_labels(model, vocab, TOP_LABELS),
            extra={"seed": config.fit_seed, "documents": len(corpus)},
        )
        self.success(f"Wrote {artifacts.path('topic_model.json')}")

        for camera, matrix in matrices.items():
            thetas = np.vstack(
                [topic_service.infer_theta(model, bag).theta for bag in matrix.rows]
            )
            artifacts.write_theta(camera, matrix.timestamps, thetas)
        self.success(f"Wrote topic proportions for {len(matrices)} cameras")
