"""Analytic BER, codeword and packet-throughput model and the spreading-length optimizer.

The BER before decoding is the maximal-ratio-combining Rayleigh expression
F(Nd) = sum_i C(2i, i) (gamma/(4 Nd))^i (Nd/(Nd + gamma))^(i + 1/2), written
for Nd as a continuous variable so that Newton steps can be taken on it.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import gammaln

from .interference import ImpactClass
from .spreading import EccParams, feasible_nd

NEWTON_MAX_ITERS = 20
BISECTION_ITERS = 8


@dataclass(frozen=True)
class LinkBudget:
    """Powers per DAFT bin and the occupied bandwidth in Hz."""

    Ps: float
    Pn: float
    Pi: float
    Bc: float

    def __post_init__(self) -> None:
        if self.Ps <= 0 or self.Pn < 0 or self.Pi < 0 or self.Bc <= 0:
            raise ValueError("need Ps > 0, Pn >= 0, Pi >= 0, Bc > 0")

    @classmethod
    def from_db(cls, snr_db: float, isr_db: float | None, Bc: float, Ps: float = 1.0) -> "LinkBudget":
        """Pn = Ps / SNR and Pi = Ps * ISR; ``isr_db=None`` means no interference."""
        Pi = 0.0 if isr_db is None else Ps * 10 ** (isr_db / 10)
        return cls(Ps=Ps, Pn=Ps * 10 ** (-snr_db / 10), Pi=Pi, Bc=Bc)

    def to_json(self) -> str:
        return json.dumps(asdict(self))

    @classmethod
    def from_json(cls, text: str) -> "LinkBudget":
        return cls(**json.loads(text))


@dataclass(frozen=True)
class AnalyticContext:
    """System constants of the throughput model.

    Attributes:
        N: DAFT bins per frame.
        Ncp: prefix length.
        Nm: constellation order.
        Np: information bits per packet.
        ecc: code parameters.
        L: diversity order (number of separable paths).
        impact: stationary or concentrated (matched sweep) interference.
        budget: powers and bandwidth.
    """

    N: int
    Ncp: int
    Nm: int
    Np: int
    ecc: EccParams
    L: int
    impact: ImpactClass
    budget: LinkBudget

    def __post_init__(self) -> None:
        if self.Np % self.ecc.Ni:
            raise ValueError("Np must be a multiple of Ni")
        if self.L < 1:
            raise ValueError("L must be positive")

    @property
    def log2Nm(self) -> int:
        return int(math.log2(self.Nm))

    @property
    def M(self) -> int:
        """N * log2(Nm), the bits carried by one frame without spreading."""
        return self.N * self.log2Nm

    @property
    def gamma_in(self) -> float:
        b = self.budget
        return self.L * self.log2Nm * (b.Pn + b.Pi) / b.Ps

    @property
    def gamma_n(self) -> float:
        b = self.budget
        return self.L * self.log2Nm * b.Pn / b.Ps

    @property
    def gamma_i(self) -> float:
        b = self.budget
        return self.N * self.L * self.log2Nm * b.Pi / b.Ps

    def gamma_m(self, Nd: float) -> float:
        return self.gamma_i + self.gamma_n * Nd**2

    def R(self, Nd: float) -> float:
        """Share of bits hit by the concentrated bin, clamped to [0, 1]."""
        return min(max(Nd / self.M, 0.0), 1.0)

    @property
    def G(self) -> int:
        return self.Np // self.ecc.Ni

    @property
    def K(self) -> float:
        e = self.ecc
        return self.Np * e.No * (self.N + self.Ncp) / (self.N * e.Ni * self.budget.Bc * self.log2Nm)

    def packet_time(self, Nd: float) -> float:
        return self.K * Nd

    def with_budget(self, budget: LinkBudget) -> "AnalyticContext":
        return AnalyticContext(self.N, self.Ncp, self.Nm, self.Np, self.ecc, self.L, self.impact, budget)


# ---------------------------------------------------------------------------
# F(Nd) and its derivatives


def _series(x: float, L: int) -> tuple[float, float, float]:
    """g(x) = sum_{i<L} C(2i,i) (x/4)^i (1 + x)^-(i + 1/2) and its x-derivatives.

    The termwise derivatives telescope to -L a_L x^(L-1) (1 + x)^-(L + 1/2)
    with a_L = C(2L,L) 4^-L, so g' and g'' carry no cancellation even where
    g is within rounding of 1.
    """
    g = sum(math.comb(2 * i, i) * (x / 4) ** i * (1 + x) ** -(i + 0.5) for i in range(L))
    c = L * math.comb(2 * L, L) / 4**L
    d1 = -c * x ** (L - 1) * (1 + x) ** -(L + 0.5)
    d2 = c * (L + 0.5) * x ** (L - 1) * (1 + x) ** -(L + 1.5)
    if L > 1:
        d2 -= c * (L - 1) * x ** (L - 2) * (1 + x) ** -(L + 0.5)
    return g, d1, d2


def _chain(g: tuple[float, float, float], x1: float, x2: float) -> tuple[float, float, float]:
    return g[0], g[1] * x1, g[2] * x1 * x1 + g[1] * x2


def _mrc_terms(Nd: float, gamma: float, L: int) -> tuple[float, float, float]:
    """Theta(Nd) and its first two derivatives for a constant gamma.

    Term i equals C(2i,i) (gamma/4)^i Nd^(1/2) (Nd + gamma)^-(i + 1/2), i.e.
    the series g evaluated at x = gamma / Nd.
    """
    x = gamma / Nd
    return _chain(_series(x, L), -gamma / Nd**2, 2 * gamma / Nd**3)


def _concentrated_terms(Nd: float, gi: float, gn: float, L: int) -> tuple[float, float, float]:
    """Psi_2 and derivatives, gamma_m = gi + gn Nd^2.

    Term i equals C(2i,i) 4^-i gamma_m^i Nd^(3/2) (Nd^3 + gamma_m)^-(i + 1/2),
    the series g at x = gamma_m / Nd^3 = gi / Nd^3 + gn / Nd.
    """
    x = gi / Nd**3 + gn / Nd
    return _chain(_series(x, L), -3 * gi / Nd**4 - gn / Nd**2, 12 * gi / Nd**5 + 2 * gn / Nd**3)


def F_and_derivs(Nd: float, ctx: AnalyticContext) -> tuple[float, float, float]:
    """F(Nd), dF/dNd and d2F/dNd2 for the context's impact class."""
    if Nd <= 0:
        raise ValueError("Nd must be positive")
    if ctx.impact is ImpactClass.STATIONARY:
        return _mrc_terms(Nd, ctx.gamma_in, ctx.L)
    p1, p1d, p1dd = _mrc_terms(Nd, ctx.gamma_n, ctx.L)
    p2, p2d, p2dd = _concentrated_terms(Nd, ctx.gamma_i, ctx.gamma_n, ctx.L)
    R = ctx.R(Nd)
    dR = 1.0 / ctx.M if Nd < ctx.M else 0.0
    f = R * p2 + (1 - R) * p1
    f1 = dR * (p2 - p1) + R * p2d + (1 - R) * p1d
    f2 = 2 * dR * (p2d - p1d) + R * p2dd + (1 - R) * p1dd
    return f, f1, f2


def coefficient_F_derivs(Nd: float, ctx: AnalyticContext, literal: bool = False) -> tuple[float, float]:
    """Coefficient-form (beta, phi, psi, mu) expressions for F1 and F2.

    Kept as a separately written route so it can be compared against
    :func:`F_and_derivs` and finite differences. Only meaningful while
    Nd <= N log2(Nm) (the mixture weight is not clamped here).

    With ``literal=True`` the concentrated-interference phi_2 and mu_2 use the
    coefficients as commonly printed, which do not differentiate phi_1 and
    mu_1 correctly; the default uses the corrected coefficients.
    """
    L = ctx.L
    if ctx.impact is ImpactClass.STATIONARY:
        g = ctx.gamma_in
        F1 = F2 = 0.0
        for i in range(L):
            c = math.comb(2 * i, i) * (g / 4) ** i
            b1 = (g - 2 * i * Nd) / (2 * Nd**0.5 * (Nd + g) ** (i + 1.5))
            b2 = (4 * (i + i * i) * Nd**2 - 4 * (i + 1) * g * Nd - g * g) / (4 * Nd**1.5 * (Nd + g) ** (i + 2.5))
            F1 += c * b1
            F2 += c * b2
        return F1, F2
    gn, gi, M = ctx.gamma_n, ctx.gamma_i, ctx.M
    F1 = F2 = 0.0
    for i in range(L):
        psi = (i - 1) * Nd**1.5 - (i * M + 1.5 * gn) * Nd**0.5 + gn * M / 2 * Nd**-0.5
        phi1 = (Nd + gn) ** -(i + 1.5) * psi
        if literal:
            phi2 = (Nd + gn) ** -(i + 1.5) / 4 * (
                -(4 * i * i + 8 * i + 6) * Nd**1.5
                + (4 * (i * i + i) * M + 12 * i + 6 * (1 - gn)) * Nd**0.5
                - (4 * (i + 1) * M - 12 * i - 6 + 3 * gn) * gn * Nd**-0.5
                - gn * gn * M * Nd**-1.5
            )
        else:
            phi2 = (Nd + gn) ** -(i + 2.5) / 4 * Nd**-1.5 * (
                -4 * i * (i - 1) * Nd**3
                + (4 * M * (i * i + i) + 12 * gn * i) * Nd**2
                - (4 * M * gn * (i + 1) + 3 * gn * gn) * Nd
                - M * gn * gn
            )
        gm = gi + gn * Nd**2
        S = Nd**3 + gm
        mu1 = (
            S ** -(i + 1.5) / 8 * (gm / 4) ** (i - 1)
            * ((2 - 2 * i) * gn * Nd**6.5 + 3 * gn**2 * Nd**5.5 + (2 - 6 * i) * gi * Nd**4.5
               + 8 * gi * gn * Nd**3.5 + 5 * gi**2 * Nd**1.5)
        )
        # d/dNd log(gamma_m^i) = 2 i gn Nd / gamma_m; the literal form drops the 2
        r = i if literal else 2 * i
        A = r * gn * Nd / gm + 2.5 / Nd - (2 * i + 1) * (3 * Nd**2 + 2 * gn * Nd) / (2 * S)
        B = (
            r * gn * (gi - gn * Nd**2) / gm**2
            - 2.5 / Nd**2
            + (2 * i + 1) * (3 * Nd**4 + 4 * gn * Nd**3 + 2 * gn**2 * Nd**2 - 6 * gi * Nd - 2 * gi * gn) / (2 * S**2)
        )
        mu2 = (gm / 4) ** i * S ** -(i + 0.5) * Nd**2.5 * (B + A * A)
        c = math.comb(2 * i, i)
        F1 += c * ((gn / 4) ** i * phi1 + mu1)
        F2 += c * ((gn / 4) ** i * phi2 + mu2)
    return F1 / M, F2 / M


# ---------------------------------------------------------------------------
# codeword and packet level


def _log_binom(n: int, k: np.ndarray) -> np.ndarray:
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def codeword_success(Pe: float, ecc: EccParams) -> float:
    """P(at most Ne of No bits in error) for i.i.d. bit errors, summed in log space."""
    if not 0 <= Pe <= 1:
        raise ValueError("Pe must lie in [0, 1]")
    if Pe == 0:
        return 1.0
    if Pe == 1:
        return 1.0 if ecc.Ne >= ecc.No else 0.0
    k = np.arange(ecc.Ne + 1)
    logs = _log_binom(ecc.No, k) + k * math.log(Pe) + (ecc.No - k) * math.log1p(-Pe)
    return float(min(1.0, np.exp(np.logaddexp.reduce(logs))))


def ber_before_decoding(Nd: float, ctx: AnalyticContext) -> float:
    """BER after despreading, 1/2 (1 - F(Nd)), clamped to [0, 1/2]."""
    if Nd < 1:
        raise ValueError("Nd must be >= 1")
    b = ctx.budget
    if b.Pn == 0 and b.Pi == 0:
        return 0.0
    f, _, _ = F_and_derivs(Nd, ctx)
    return min(max(0.5 * (1 - f), 0.0), 0.5)


def log_throughput(Nd: float, ctx: AnalyticContext) -> float:
    Pe = ber_before_decoding(Nd, ctx)
    P = codeword_success(Pe, ctx.ecc)
    if P == 0:
        return -math.inf
    return ctx.G * math.log(P) - math.log(ctx.packet_time(Nd))


def packet_throughput(Nd: float, ctx: AnalyticContext) -> float:
    """eta = P_dc(P_e)^G / (K Nd), in packets per second."""
    return math.exp(log_throughput(Nd, ctx))


def packet_throughput_binomial_form(Nd: float, ctx: AnalyticContext) -> float:
    """Same quantity written as [sum C(No,k)(1-F)^k(1+F)^(No-k)]^G / (2^(G No) K Nd)."""
    e = ctx.ecc
    f = 1 - 2 * ber_before_decoding(Nd, ctx)
    k = np.arange(e.Ne + 1)
    with np.errstate(divide="ignore"):
        logs = _log_binom(e.No, k) + k * np.log(1 - f) + (e.No - k) * np.log(1 + f)
    log_num = ctx.G * (np.logaddexp.reduce(logs) - e.No * math.log(2))
    return float(math.exp(log_num - math.log(ctx.K * Nd)))


def packet_success(Nd: float, ctx: AnalyticContext) -> float:
    return codeword_success(ber_before_decoding(Nd, ctx), ctx.ecc) ** ctx.G


@dataclass(frozen=True)
class Derivatives:
    """Objective values at one Nd.

    ``U`` is d(eta)/dNd and ``dU`` its derivative. ``g`` and ``dg`` are the
    first two derivatives of log(eta), which stay finite when eta underflows;
    the Newton step -U/dU equals -g/(g^2 + dg).
    """

    F: float
    F1: float
    F2: float
    eta: float
    U: float
    dU: float
    g: float
    dg: float

    @property
    def newton_step(self) -> float:
        den = self.g * self.g + self.dg
        return -self.g / den if den != 0 else math.nan


def objective_derivatives(Nd: float, ctx: AnalyticContext) -> Derivatives:
    """Closed-form F, F1, F2, U = d(eta)/dNd and dU/dNd at a real Nd."""
    e = ctx.ecc
    F, F1, F2 = F_and_derivs(Nd, ctx)
    if ctx.budget.Pn == 0 and ctx.budget.Pi == 0:
        F, F1, F2 = 1.0, 0.0, 0.0
    Pe = min(max(0.5 * (1 - F), 0.0), 0.5)
    dPe, d2Pe = -F1 / 2, -F2 / 2
    P = codeword_success(Pe, e)
    # dP/dPe = -No C(No-1, Ne) Pe^Ne (1-Pe)^(No-1-Ne)
    c = e.No * math.comb(e.No - 1, e.Ne)
    b = e.No - 1 - e.Ne
    w = Pe**e.Ne * (1 - Pe) ** b
    dw = 0.0
    if e.Ne:
        dw += e.Ne * Pe ** (e.Ne - 1) * (1 - Pe) ** b
    if b:
        dw -= b * Pe**e.Ne * (1 - Pe) ** (b - 1)
    dP = -c * w * dPe
    d2P = -c * (dw * dPe * dPe + w * d2Pe)
    g = ctx.G * dP / P - 1 / Nd
    dg = ctx.G * (d2P / P - (dP / P) ** 2) + 1 / Nd**2
    eta = math.exp(ctx.G * math.log(P) - math.log(ctx.packet_time(Nd))) if P > 0 else 0.0
    return Derivatives(F=F, F1=F1, F2=F2, eta=eta, U=eta * g, dU=eta * (g * g + dg), g=g, dg=dg)


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class ThroughputReport:
    Nd_opt: int
    eta_opt: float
    iterations: int
    trace: list[tuple[float, float, float]] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    Nd_newton: float = math.nan

    def to_json(self) -> str:
        return json.dumps(asdict(self))


def feasible_set(ctx: AnalyticContext, constrained: bool = True, upper: int | None = None) -> np.ndarray:
    """Candidate spreading lengths: divisors of N log2(Nm), or all integers."""
    top = upper if upper is not None else ctx.M
    if constrained:
        return feasible_nd(ctx.N, ctx.Nm, top)
    return np.arange(1, top + 1)


def grid_search(ctx: AnalyticContext, candidates: np.ndarray) -> tuple[int, float]:
    """Exhaustive argmax of eta over the candidates (oracle)."""
    vals = np.array([log_throughput(float(n), ctx) for n in candidates])
    j = int(np.argmax(vals))
    return int(candidates[j]), float(math.exp(vals[j]))


def search_bracket(ctx: AnalyticContext) -> tuple[int, int]:
    """[floor(gamma/8), ceil(2 gamma)] with gamma_in or gamma_n by impact class."""
    gamma = ctx.gamma_in if ctx.impact is ImpactClass.STATIONARY else ctx.gamma_n
    lo = max(1, int(math.floor(gamma / 8)))
    hi = max(lo + 1, int(math.ceil(2 * gamma)))
    return lo, hi


def _snap(Nd: float, candidates: np.ndarray, ctx: AnalyticContext) -> tuple[int, float]:
    """Best feasible value among the two divisors on each side of Nd."""
    j = int(np.searchsorted(candidates, Nd))
    near = candidates[max(0, j - 2): j + 2]
    vals = [log_throughput(float(n), ctx) for n in near]
    k = int(np.argmax(vals))
    return int(near[k]), math.exp(vals[k])


def optimize_nd(ctx: AnalyticContext, constrained: bool = True, upper: int | None = None) -> ThroughputReport:
    """Bisection-seeded Newton search for the throughput-maximizing Nd.

    Bisection on the sign of d(eta)/dNd over the bracket gives the start point.
    Newton then steps Nd <- Nd - ceil(U / dU) until two consecutive steps
    disagree in sign, and the iterate at which that happens is returned. The
    continuous result is finally moved to the best nearby feasible value.
    """
    cands = feasible_set(ctx, constrained, upper)
    top = float(cands[-1])
    b = ctx.budget
    if b.Pn == 0 and b.Pi == 0:
        Nd = int(cands[0])
        return ThroughputReport(Nd, packet_throughput(Nd, ctx), 0, [], ["noise-free budget: smallest feasible Nd"], float(Nd))

    notes: list[str] = []
    lo, hi = search_bracket(ctx)
    hi = min(hi, int(top))
    lo = min(lo, hi)

    def slope(x: float) -> float:
        return objective_derivatives(x, ctx).g

    if slope(lo) <= 0:
        seed = float(lo)
        notes.append("throughput already decreasing at the lower bracket end")
    elif slope(hi) >= 0:
        seed = float(hi)
        notes.append("throughput still increasing at the upper bracket end")
    else:
        a, c = float(lo), float(hi)
        for _ in range(BISECTION_ITERS):
            mid = 0.5 * (a + c)
            if slope(mid) > 0:
                a = mid
            else:
                c = mid
        seed = float(round(0.5 * (a + c)))

    trace: list[tuple[float, float, float]] = []
    Nd = max(1.0, seed)
    prev_D = None
    result = None
    it = 0
    for it in range(1, NEWTON_MAX_ITERS + 1):
        d = objective_derivatives(Nd, ctx)
        step = d.newton_step
        if not (math.isfinite(step) and math.isfinite(d.g)):
            notes.append("non-finite derivative, grid fallback")
            break
        if d.g * d.g + d.dg >= 0:
            # not locally concave: Newton would head for a minimum
            notes.append("objective not concave at iterate, grid fallback")
            break
        D = float(-math.ceil(-step))
        trace.append((Nd, d.U, D))
        if D == 0 or (prev_D is not None and D * prev_D <= 0):
            result = Nd
            break
        prev_D = D
        nxt = min(max(1.0, Nd + D), top)
        if nxt == Nd:
            # pinned at a feasible-range end with the step pointing outward
            notes.append("iterate pinned at the end of the feasible range")
            result = Nd
            break
        Nd = nxt
    if result is None:
        n_grid, eta_grid = grid_search(ctx, cands[(cands >= lo) & (cands <= hi)] if constrained else np.arange(lo, hi + 1))
        notes.append("newton did not settle; grid search over the bracket")
        return ThroughputReport(n_grid, eta_grid, it, trace, notes, math.nan)
    Nd_opt, eta = _snap(result, cands, ctx)
    return ThroughputReport(Nd_opt, eta, it, trace, notes, result)
