"""Dense Laplacian eigendecomposition and Monte-Carlo checks of the spectral
stability conditions: the eigengap/noise-rate assumptions, the third-eigenvalue
lower bound under random edge removal, and the expected rotation of the second
eigenvector."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph, laplacian, make_rng, STREAM_TRIAL

DENSE_LIMIT = 2000
CONNECTIVITY_TOL = 1e-9


class SizeLimitError(ValueError):
    pass


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    uN: np.ndarray
    chi: float = float("nan")
    edge_exponent: float = float("nan")
    epsilon: float = float("nan")
    q: float = float("nan")
    kappa: float = float("nan")
    beta: float = float("nan")
    assumption1_holds: bool = False
    assumption2_holds: bool = False

    @property
    def lambda2(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def lambda3(self) -> float:
        return float(self.eigenvalues[2])

    @property
    def lambdaN(self) -> float:
        return float(self.eigenvalues[-1])


def _canonical_sign(u: np.ndarray) -> np.ndarray:
    for v in u:
        if abs(v) > 1e-12:
            return u if v > 0 else -u
    return u


def eig_laplacian(g: Graph, dense_limit: int = DENSE_LIMIT) -> SpectralReport:
    """Full symmetric eigendecomposition of L = D - A, ascending, with
    eigenvector signs canonicalized (first nonzero coordinate positive)."""
    if g.n > dense_limit:
        raise SizeLimitError(f"n={g.n} exceeds dense limit {dense_limit}")
    if g.n < 3:
        raise ValueError("need at least 3 nodes for the spectral lab")
    lap = laplacian(g).laplacian.toarray()
    vals, vecs = np.linalg.eigh(lap)
    order = np.argsort(vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for col in range(vecs.shape[1]):
        vecs[:, col] = _canonical_sign(vecs[:, col])
    return SpectralReport(
        eigenvalues=vals,
        u2=vecs[:, 1].copy(),
        u3=vecs[:, 2].copy(),
        uN=vecs[:, -1].copy(),
    )


def stability_constants(
    lambda2: float, q: float, n: int, sum_deg_sq: float, m: int
) -> tuple[float, float, float, float]:
    """(chi, edge_exponent, beta, kappa) from degree/edge counts: the degree
    second moment is n^chi, the edge count n^edge_exponent, beta is half their
    max, and kappa solves q = lambda2 / (kappa * n^beta)."""
    log_n = math.log(n)
    chi = math.log(sum_deg_sq) / log_n if sum_deg_sq > 0 else float("nan")
    edge_exponent = math.log(m) / log_n if m > 0 else float("nan")
    beta = 0.5 * max(chi, edge_exponent)
    if q > 0 and lambda2 > 0 and math.isfinite(beta):
        kappa = lambda2 / (q * n ** beta)
    elif q == 0 and lambda2 > 0:
        kappa = float("inf")
    else:
        kappa = float("nan")
    return chi, edge_exponent, beta, kappa


def check_assumption(g_clean: Graph, q: float, epsilon: float) -> SpectralReport:
    """Evaluate both stability conditions on a clean graph at removal rate q.

    Condition 1: (2e/(e-1)) * lambda2 < lambda3 and lambda3 clears both the
    (25/2)*e*q*lambdaN and (3/2)*e*ln(n) floors. Condition 2: kappa > 1. A
    disconnected graph (lambda2 = 0) leaves kappa undefined and fails 2.
    """
    if epsilon < 2:
        raise ValueError("epsilon must be >= 2")
    if not (0 <= q < 1):
        raise ValueError("q must be in [0, 1)")
    report = eig_laplacian(g_clean)
    deg = g_clean.degrees().astype(np.float64)
    chi, edge_exponent, beta, kappa = stability_constants(
        report.lambda2, q, g_clean.n, float((deg ** 2).sum()), g_clean.num_edges
    )
    report.chi = chi
    report.edge_exponent = edge_exponent
    report.beta = beta
    report.kappa = kappa
    report.epsilon = epsilon
    report.q = q
    lam2, lam3, lam_n = report.lambda2, report.lambda3, report.lambdaN
    gap_ok = (2 * epsilon / (epsilon - 1)) * lam2 < lam3
    floor_ok = lam3 >= max(
        12.5 * epsilon * q * lam_n, 1.5 * epsilon * math.log(g_clean.n)
    )
    report.assumption1_holds = bool(gap_ok and floor_ok)
    report.assumption2_holds = bool(kappa > 1)
    if report.lambda2 <= CONNECTIVITY_TOL:
        report.kappa = float("nan")
        report.assumption2_holds = False
    return report


def _remove_edges(g: Graph, q: float, rng: np.random.Generator) -> Graph:
    """Independent removal of each edge with probability q."""
    keep = rng.random(g.num_edges) >= q
    kept = tuple(e for e, flag in zip(g.edges, keep) if flag)
    return Graph(n=g.n, edges=kept, features=g.features)


def _sin_angle(u: np.ndarray, v: np.ndarray) -> float:
    dot = min(1.0, abs(float(u @ v)))
    return math.sqrt(max(0.0, 1.0 - dot * dot))


@dataclass
class PerturbationResult:
    mean_sin: float
    sins: list[float] = field(default_factory=list)
    davis_kahan_checked: int = 0


def perturb_and_angle(
    g_clean: Graph,
    q: float,
    trials: int,
    seed: int,
    dense_limit: int = DENSE_LIMIT,
) -> PerturbationResult:
    """Remove each edge with probability q per trial and measure the rotation
    of the second Laplacian eigenvector vs the clean graph.

    Each trial is also sanity-checked against the Davis-Kahan bound
    sin <= ||L - L'||_F / delta whenever the gap delta is well separated.
    """
    if trials < 1:
        raise ValueError("need at least one trial")
    clean = eig_laplacian(g_clean, dense_limit=dense_limit)
    lap_clean = laplacian(g_clean).laplacian.toarray()
    sins = []
    dk_checked = 0
    for t in range(trials):
        rng = make_rng(seed, STREAM_TRIAL, t)
        noisy = _remove_edges(g_clean, q, rng)
        if noisy.edges == g_clean.edges:
            sins.append(0.0)
            continue
        noisy_eig = eig_laplacian(noisy, dense_limit=dense_limit)
        s = _sin_angle(noisy_eig.u2, clean.u2)
        sins.append(s)
        delta = np.abs(np.delete(noisy_eig.eigenvalues, 1) - clean.lambda2).min()
        if delta > 1e-6:
            lap_noisy = laplacian(noisy).laplacian.toarray()
            bound = float(np.linalg.norm(lap_noisy - lap_clean, "fro")) / delta
            dk_checked += 1
            if s > bound * (1 + 1e-9) + 1e-6:
                raise AssertionError(
                    f"Davis-Kahan violated at trial {t}: sin={s} > bound={bound}"
                )
    return PerturbationResult(
        mean_sin=float(np.mean(sins)), sins=sins, davis_kahan_checked=dk_checked
    )


def lemma_check(
    g_clean: Graph,
    q: float,
    epsilon: float,
    trials: int,
    seed: int,
    dense_limit: int = DENSE_LIMIT,
) -> float:
    """Empirical frequency of lambda3(noisy) >= (1 - 1/epsilon) * lambda3(clean)
    under independent edge removal. Warns when the stability conditions do
    not hold, since the frequency floor is only guaranteed under them."""
    conditions = check_assumption(g_clean, q, epsilon)
    if not (conditions.assumption1_holds and conditions.assumption2_holds):
        warnings.warn(
            "stability conditions do not hold on this graph; the frequency "
            "bound is not guaranteed",
            stacklevel=2,
        )
    clean = eig_laplacian(g_clean, dense_limit=dense_limit)
    threshold = (1.0 - 1.0 / epsilon) * clean.lambda3
    hits = 0
    for t in range(trials):
        rng = make_rng(seed, STREAM_TRIAL, t)
        noisy = _remove_edges(g_clean, q, rng)
        noisy_eig = eig_laplacian(noisy, dense_limit=dense_limit)
        if noisy_eig.lambda3 >= threshold - 1e-12:
            hits += 1
    return hits / trials


def verification_report(
    g_clean: Graph, q: float, epsilon: float, trials: int, seed: int
) -> str:
    """The key=value text report combining all three checks."""
    report = check_assumption(g_clean, q, epsilon)
    perturb = perturb_and_angle(g_clean, q, trials, seed)
    freq = lemma_check(g_clean, q, epsilon, trials, seed)
    bound = 1.0 / report.kappa if report.kappa and report.kappa > 0 else float("nan")
    if report.kappa == float("inf"):
        bound = 0.0
    lemma_bound = 1.0 - g_clean.n ** (-0.125)
    lines = [
        f"lambda2={report.lambda2:.6f}",
        f"lambda3={report.lambda3:.6f}",
        f"lambdaN={report.lambdaN:.6f}",
        f"chi={report.chi:.6f}",
        f"edge_exponent={report.edge_exponent:.6f}",
        f"beta={report.beta:.6f}",
        f"kappa={report.kappa:.6f}",
        f"assumption1={'pass' if report.assumption1_holds else 'fail'}",
        f"assumption2={'pass' if report.assumption2_holds else 'fail'}",
        f"mean_sin={perturb.mean_sin:.6f}",
        f"bound={bound:.6f}",
        f"lemma_freq={freq:.6f}",
        f"lemma_bound={lemma_bound:.6f}",
    ]
    return "\n".join(lines) + "\n"
