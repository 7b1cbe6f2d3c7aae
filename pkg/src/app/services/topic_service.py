"""
TopicService: LDA by online variational Bayes, perplexity and K selection.

Fitting follows the usual online scheme:
1. Documents are shuffled once per pass with the seeded generator and cut
   into mini-batches.
2. The E-step runs mean-field updates per document until the mean absolute
   change of its topic proportions drops below ``tol``.
3. The topic parameters are blended with the batch estimate using the step
   size rho_t = (tau0 + t)^-kappa, t = 1, 2, ...

Per-document variational parameters are carried between passes, so with
kappa = 0 and a single batch the fit is plain batch coordinate ascent.
"""

import logging
import math

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import gammaln, logsumexp, psi

from app.exceptions import InputDataError, NumericalError, SelectionError
from app.models import (
    BagVector,
    DocTopicAssignment,
    SelectionCurve,
    TopicModel,
    Vocabulary,
)
from app.serializers import PERPLEXITY_METHODS

logger = logging.getLogger(__name__)

PHINORM_FLOOR = 1e-100


def dirichlet_expectation(alpha: np.ndarray) -> np.ndarray:
    """E[log theta] for theta ~ Dir(alpha); rows are independent."""
    if alpha.ndim == 1:
        return psi(alpha) - psi(np.sum(alpha))
    return psi(alpha) - psi(np.sum(alpha, axis=1))[:, np.newaxis]


def _doc_arrays(bag: BagVector) -> tuple[np.ndarray, np.ndarray]:
    ids = np.fromiter(bag.dims.keys(), dtype=np.int64, count=len(bag.dims))
    cts = np.fromiter(bag.dims.values(), dtype=float, count=len(bag.dims))
    return ids, cts


class TopicService:
    """Service for fitting and evaluating LDA topic models."""

    def __init__(self, max_iterations: int = 100, tol: float = 1e-4):
        """
        Args:
            max_iterations: Cap on per-document variational iterations
            tol: Convergence threshold on mean |delta theta|
        """
        self.max_iterations = max_iterations
        self.tol = tol

    # ------------------------------------------------------------------
    # variational E-step
    # ------------------------------------------------------------------

    def _e_step_doc(
        self,
        ids: np.ndarray,
        cts: np.ndarray,
        gammad: np.ndarray,
        alpha: float,
        exp_beta: np.ndarray,
        max_iterations: int | None = None,
        tol: float | None = None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Mean-field updates for one document.

        ``exp_beta`` holds exp(E[log beta]) (or a frozen phi) for the
        columns ``ids``. Returns (gamma, exp(E[log theta]), phinorm).
        """
        exp_theta = np.exp(dirichlet_expectation(gammad))
        if ids.size == 0:
            gammad = np.full_like(gammad, alpha)
            return gammad, np.exp(dirichlet_expectation(gammad)), np.zeros(0)

        max_iterations = self.max_iterations if max_iterations is None else max_iterations
        tol = self.tol if tol is None else tol
        phinorm = exp_theta @ exp_beta + PHINORM_FLOOR
        theta = gammad / gammad.sum()
        for _ in range(max_iterations):
            gammad = alpha + exp_theta * ((cts / phinorm) @ exp_beta.T)
            exp_theta = np.exp(dirichlet_expectation(gammad))
            phinorm = exp_theta @ exp_beta + PHINORM_FLOOR
            new_theta = gammad / gammad.sum()
            change = np.mean(np.abs(new_theta - theta))
            theta = new_theta
            if change < tol:
                break
        return gammad, exp_theta, phinorm

    def _initial_gamma(self, cts: np.ndarray, K: int, alpha: float) -> np.ndarray:
        return np.full(K, alpha + cts.sum() / K)

    # ------------------------------------------------------------------
    # fitting
    # ------------------------------------------------------------------

    def fit_online_vb(
        self,
        corpus: list[BagVector],
        K: int,
        M: int,
        alpha: float | None = None,
        beta: float = 0.1,
        batch_size: int = 256,
        passes: int = 3,
        seed: int = 0,
        kappa: float = 0.7,
        tau0: float = 64.0,
        vocab_hash: str = "",
        monitor_elbo: bool = False,
    ) -> TopicModel:
        """
        Fit LDA with online variational Bayes.

        Args:
            corpus: Documents as (possibly fractional) bags
            K: Number of topics
            M: Vocabulary size
            alpha: Symmetric document-topic prior (default 50/K)
            beta: Symmetric topic-label prior
            batch_size: Documents per update
            passes: Full sweeps over the corpus
            seed: Seed for initialization and shuffling
            kappa: Step-size decay exponent
            tau0: Step-size delay
            vocab_hash: Digest of the vocabulary the bags index
            monitor_elbo: Record the corpus bound after every pass

        Returns:
            TopicModel with row-stochastic phi

        Raises:
            InputDataError: empty corpus, bad K, negative weights
            NumericalError: non-finite parameters after an update
        """
        if K < 1:
            raise InputDataError(f"K must be at least 1, got {K}")
        if not corpus:
            raise InputDataError("Cannot fit a topic model on an empty corpus")
        if K > M:
            logger.warning(f"K={K} exceeds the vocabulary size M={M}")
        alpha = 50.0 / K if alpha is None else alpha

        docs = [_doc_arrays(bag) for bag in corpus]
        if any(np.any(cts < 0) for _, cts in docs):
            raise InputDataError("Topic models need non-negative label weights")
        if any(ids.size and ids.max() >= M for ids, _ in docs):
            raise InputDataError(f"A document indexes beyond M={M}")

        D = len(docs)
        rng = np.random.default_rng(seed)
        lam = rng.gamma(100.0, 1.0 / 100.0, (K, M))
        exp_beta = np.exp(dirichlet_expectation(lam))
        gamma = np.vstack([self._initial_gamma(cts, K, alpha) for _, cts in docs])

        elbo_history = []
        update = 0
        for pass_number in range(passes):
            order = rng.permutation(D)
            for begin in range(0, D, batch_size):
                batch = order[begin : begin + batch_size]
                update += 1
                rho = (tau0 + update) ** (-kappa)

                sstats = np.zeros((K, M))
                for d in batch:
                    ids, cts = docs[d]
                    gammad, exp_theta, phinorm = self._e_step_doc(
                        ids, cts, gamma[d], alpha, exp_beta[:, ids]
                    )
                    gamma[d] = gammad
                    if ids.size:
                        sstats[:, ids] += np.outer(exp_theta, cts / phinorm)
                sstats *= exp_beta

                lam = (1.0 - rho) * lam + rho * (beta + D * sstats / len(batch))
                if not np.all(np.isfinite(lam)):
                    raise NumericalError("Non-finite topic parameters", iteration=update)
                exp_beta = np.exp(dirichlet_expectation(lam))

            if monitor_elbo:
                elbo = self._corpus_elbo(docs, gamma, lam, alpha, beta)
                if elbo_history and elbo < elbo_history[-1] - 1e-6 * abs(
                    elbo_history[-1]
                ):
                    logger.warning(
                        f"ELBO decreased after pass {pass_number + 1}: "
                        f"{elbo_history[-1]:.6f} -> {elbo:.6f}"
                    )
                elbo_history.append(elbo)

        phi = lam / lam.sum(axis=1, keepdims=True)
        logger.info(f"Fitted K={K} topics on {D} documents in {update} updates")
        return TopicModel(
            K=K,
            phi=phi,
            alpha=alpha,
            beta=beta,
            vocab_hash=vocab_hash,
            elbo_history=tuple(elbo_history),
        )

    def _corpus_elbo(self, docs, gamma, lam, alpha, beta) -> float:
        """
        Mean-field lower bound on log p(corpus).

        Document parameters are refreshed against the current topics,
        warm-started from a copy of ``gamma``; the fit state is left as is.
        """
        K, M = lam.shape
        log_beta = dirichlet_expectation(lam)
        exp_beta = np.exp(log_beta)
        score = 0.0
        for d, (ids, cts) in enumerate(docs):
            gammad, _, _ = self._e_step_doc(
                ids, cts, gamma[d].copy(), alpha, exp_beta[:, ids]
            )
            log_theta = dirichlet_expectation(gammad)
            if ids.size:
                score += float(
                    cts @ logsumexp(log_theta[:, np.newaxis] + log_beta[:, ids], axis=0)
                )
            score += float(np.sum((alpha - gammad) * log_theta))
            score += float(np.sum(gammaln(gammad) - gammaln(alpha)))
            score += float(gammaln(alpha * K) - gammaln(gammad.sum()))

        score += float(np.sum((beta - lam) * log_beta))
        score += float(np.sum(gammaln(lam) - gammaln(beta)))
        score += float(np.sum(gammaln(beta * M) - gammaln(lam.sum(axis=1))))
        return score

    # ------------------------------------------------------------------
    # inference
    # ------------------------------------------------------------------

    def infer_theta(
        self,
        model: TopicModel,
        bag: BagVector,
        iterations: int | None = None,
        tol: float | None = None,
    ) -> DocTopicAssignment:
        """
        Topic proportions for one bag with the model's phi frozen.

        Raises:
            InputDataError: bag indexes beyond the model's vocabulary
        """
        ids, cts = _doc_arrays(bag)
        if ids.size and ids.max() >= model.M:
            raise InputDataError(f"Bag indexes beyond the model's M={model.M}")
        gammad, _, _ = self._e_step_doc(
            ids,
            cts,
            self._initial_gamma(cts, model.K, model.alpha),
            model.alpha,
            model.phi[:, ids],
            max_iterations=iterations,
            tol=tol,
        )
        return DocTopicAssignment(theta=gammad / gammad.sum())

    # ------------------------------------------------------------------
    # evaluation
    # ------------------------------------------------------------------

    def perplexity(
        self, model: TopicModel, heldout: list[BagVector], method: str = "plugin"
    ) -> float:
        """
        Held-out perplexity exp(-sum log p(doc) / sum w).

        Args:
            model: Fitted model
            heldout: Held-out bags
            method: ``plugin`` scores each document with its inferred mean
                proportions, sum_w n_w log sum_z theta_z phi_zw; ``bound``
                uses the per-document mean-field lower bound instead

        Returns:
            Perplexity (finite, positive)

        Raises:
            InputDataError: total held-out weight is zero, or unknown method
        """
        if method not in PERPLEXITY_METHODS:
            raise InputDataError(
                f"Unknown perplexity method {method!r}; expected one of {PERPLEXITY_METHODS}"
            )
        total_weight = sum(bag.weight_total for bag in heldout)
        if total_weight <= 0:
            raise InputDataError("Held-out set has no label weight")

        log_phi = np.log(np.maximum(model.phi, PHINORM_FLOOR))
        score = 0.0
        for bag in heldout:
            ids, cts = _doc_arrays(bag)
            if ids.size == 0:
                continue
            if method == "bound":
                score += self._doc_bound(model, ids, cts, log_phi)
            else:
                theta = self.infer_theta(model, bag).theta
                score += float(cts @ np.log(theta @ model.phi[:, ids] + PHINORM_FLOOR))

        value = math.exp(-score / total_weight)
        if not math.isfinite(value):
            raise NumericalError("Perplexity is not finite")
        return value

    def _doc_bound(self, model, ids, cts, log_phi) -> float:
        gammad, _, _ = self._e_step_doc(
            ids,
            cts,
            self._initial_gamma(cts, model.K, model.alpha),
            model.alpha,
            model.phi[:, ids],
        )
        log_theta = dirichlet_expectation(gammad)
        score = float(
            cts @ logsumexp(log_theta[:, np.newaxis] + log_phi[:, ids], axis=0)
        )
        score += float(np.sum((model.alpha - gammad) * log_theta))
        score += float(np.sum(gammaln(gammad) - gammaln(model.alpha)))
        score += float(gammaln(model.alpha * model.K) - gammaln(gammad.sum()))
        return score

    def select_k(
        self,
        corpus: list[BagVector],
        M: int,
        k_grid: list[int],
        delta_k: int,
        resamples: int = 50,
        split: float = 0.8,
        seed: int = 0,
        fit_options: dict | None = None,
        perplexity_method: str = "plugin",
    ) -> SelectionCurve:
        """
        Choose K from the rate of held-out perplexity change.

        Every resample draws a fresh random train/test split; every K is fit
        on the train part and scored on the test part. RPC(K) is the
        backward difference (Perp_K - Perp_{K-dK}) / dK, undefined at the
        first grid point. K* is the K preceding the first grid point whose
        mean RPC lies within one standard deviation of zero: the last K
        that still bought an appreciable drop in perplexity.
        ``perplexity_method`` is passed to :meth:`perplexity`.

        Returns:
            SelectionCurve (``k_star`` None when nothing qualifies)

        Raises:
            InputDataError: grid not spaced by delta_k, empty test split, or
                unknown perplexity method
        """
        grid = list(k_grid)
        if any(b - a != delta_k for a, b in zip(grid, grid[1:], strict=False)):
            raise InputDataError(f"K grid {grid} is not spaced by {delta_k}")
        if perplexity_method not in PERPLEXITY_METHODS:
            raise InputDataError(f"Unknown perplexity method {perplexity_method!r}")
        D = len(corpus)
        n_train = int(round(split * D))
        if n_train < 1 or n_train >= D:
            raise InputDataError(f"A {split:.2f} split of {D} documents leaves a side empty")

        options = dict(fit_options or {})
        perp = np.zeros((resamples, len(grid)))
        rng = np.random.default_rng(seed)
        for r in range(resamples):
            order = rng.permutation(D)
            train = [corpus[i] for i in order[:n_train]]
            test = [corpus[i] for i in order[n_train:]]
            for g, K in enumerate(grid):
                model = self.fit_online_vb(
                    train, K=K, M=M, seed=seed + 1000 * r + K, **options
                )
                perp[r, g] = self.perplexity(model, test, method=perplexity_method)
            logger.info(f"Resample {r + 1}/{resamples}: perplexity {perp[r].round(3)}")

        perp_mean = perp.mean(axis=0)
        rpc: list[float | None] = [None]
        rpc_std: list[float | None] = [None]
        k_star = None
        for g in range(1, len(grid)):
            slopes = (perp[:, g] - perp[:, g - 1]) / delta_k
            mean, std = float(slopes.mean()), float(slopes.std())
            rpc.append(mean)
            rpc_std.append(std)
            if k_star is None and abs(mean) <= std:
                k_star = grid[g - 1]

        curve = SelectionCurve(
            k_grid=grid,
            delta_k=delta_k,
            perp=[float(p) for p in perp_mean],
            rpc=rpc,
            rpc_std=rpc_std,
            k_star=k_star,
            seed=seed,
        )
        if k_star is None:
            logger.warning("No K in the grid has RPC within one std of zero")
        else:
            logger.info(f"Selected K*={k_star}")
        return curve

    def require_k_star(self, curve: SelectionCurve) -> int:
        if curve.k_star is None:
            raise SelectionError("No K qualifies: widen the grid or add resamples")
        return curve.k_star

    # ------------------------------------------------------------------
    # inspection
    # ------------------------------------------------------------------

    def top_labels(
        self, model: TopicModel, vocab: Vocabulary, n: int = 10
    ) -> list[list[tuple[str, float]]]:
        """Highest-probability labels per topic; ties broken by label."""
        if vocab.M != model.M:
            raise InputDataError("Model and vocabulary sizes differ")
        tops = []
        for row in model.phi:
            ranked = sorted(
                zip(vocab.entries, row, strict=True), key=lambda item: (-item[1], item[0])
            )
            tops.append([(label, float(p)) for label, p in ranked[:n]])
        return tops

    def align_topics(self, phi: np.ndarray, phi_true: np.ndarray) -> list[int]:
        """
        Match fitted topics to true topics by minimum total variation.

        Returns, per true topic, the fitted row index (-1 when there are
        fewer fitted topics than true ones).
        """
        tv = 0.5 * np.abs(phi_true[:, np.newaxis, :] - phi[np.newaxis, :, :]).sum(axis=2)
        rows, cols = linear_sum_assignment(tv)
        assignment = [-1] * phi_true.shape[0]
        for z, i in zip(rows, cols, strict=True):
            assignment[int(z)] = int(i)
        return assignment
