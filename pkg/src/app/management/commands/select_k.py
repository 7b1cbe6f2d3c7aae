"""
Django management command to choose the number of topics.
"""

from app.management.base import PipelineCommand, comma_list
from app.serializers import PERPLEXITY_METHODS
from app.services.topic_service import TopicService


class Command(PipelineCommand):
    """Command to sweep K and pick K* from the rate of perplexity change."""

    help = "Held-out perplexity sweep over a K grid; writes selection_curve.csv"

    config_options = {
        "k_grid": "k_grid",
        "delta_k": "delta_k",
        "resamples": "resamples",
        "split": "split",
        "perplexity_method": "perplexity_method",
    }
    seed_key = "select_seed"

    def add_command_arguments(self, parser):
        parser.add_argument(
            "--k-grid",
            type=comma_list,
            default=None,
            help="Comma-separated topic counts (default: 2,4,...,40)",
        )
        parser.add_argument(
            "--delta-k",
            type=int,
            default=None,
            help="Grid spacing used in the perplexity slope (default: 2)",
        )
        parser.add_argument(
            "--resamples",
            type=int,
            default=None,
            help="Random train/test splits (default: 50)",
        )
        parser.add_argument(
            "--split",
            type=float,
            default=None,
            help="Training fraction of each split (default: 0.8)",
        )
        parser.add_argument(
            "--perplexity-method",
            choices=PERPLEXITY_METHODS,
            default=None,
            help="Held-out score: plug-in mixture or per-document bound (default: plugin)",
        )

    def run(self, config, artifacts, **options):
        topic_service = TopicService(
            max_iterations=config.max_iterations, tol=config.tolerance
        )
        vocab = artifacts.read_vocabulary()
        corpus = [
            bag
            for camera in artifacts.cameras()
            for bag in artifacts.read_matrix(camera).rows
        ]
        self.stdout.write(
            f"Sweeping K over {config.k_grid} with {config.resamples} resamples "
            f"of {len(corpus)} documents..."
        )
        curve = topic_service.select_k(
            corpus,
            M=vocab.M,
            k_grid=config.k_grid,
            delta_k=config.delta_k,
            resamples=config.resamples,
            split=config.split,
            seed=config.select_seed,
            perplexity_method=config.perplexity_method,
            fit_options={
                "alpha": config.alpha,
                "beta": config.beta,
                "batch_size": config.batch_size,
                "passes": config.passes,
                "kappa": config.kappa,
                "tau0": config.tau0,
                "vocab_hash": vocab.vocab_hash,
            },
        )
        artifacts.write_selection_curve(curve)
        artifacts.write_json(
            artifacts.path("selection.json"),
            {
                "k_star": curve.k_star,
                "k_grid": curve.k_grid,
                "delta_k": curve.delta_k,
                "resamples": config.resamples,
                "split": config.split,
                "perplexity_method": config.perplexity_method,
                "seed": curve.seed,
            },
        )
        k_star = topic_service.require_k_star(curve)
        self.success(f"Selected K*={k_star}; curve in {artifacts.path('selection_curve.csv')}")
