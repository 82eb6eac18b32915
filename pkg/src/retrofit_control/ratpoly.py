"""Polynomials and rational functions in the Laplace variable s.

Real-coefficient univariate polynomials (ascending coefficient order) and
their quotients form the scalar substrate for every transfer-matrix
computation in this package.  All canonicalization is tolerance-based:
denominators are made monic and common root pairs within ``eps_cancel`` are
clustered and removed.  Root finding goes through the companion matrix.
"""

from __future__ import annotations

import warnings

import numpy as np
from numpy.polynomial import polynomial as npp

from .config import ToleranceConfig, active

# Relative magnitude below which leading coefficients are trimmed.
EPS_TRIM = 1e-12

# Pole/zero pairs closer than this (relative) band are treated as cancelled
# when classifying stability or reading off zeros: double precision cannot
# distinguish such a pair from an exact cancellation that root clustering
# missed (multiple roots are only resolved to ~eps**(1/multiplicity)).
CLASSIFICATION_BAND = 1e-5


class Polynomial:
    """Immutable real polynomial, coefficients in ascending degree order."""

    __slots__ = ("_c", "_roots")

    def __init__(self, coeffs) -> None:
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).copy()
        if c.ndim != 1:
            raise ValueError("coefficients must be one-dimensional")
        if c.size == 0:
            c = np.zeros(1)
        scale = np.max(np.abs(c))
        if scale == 0.0:
            c = np.zeros(1)
        else:
            # only coefficients at the roundoff floor of the array are
            # noise here; genuinely small leading coefficients fix the
            # degree and must survive (noise born in additions is floored
            # at EPS_TRIM by the addition itself, where the operand scale
            # is known)
            floor = 4.0 * np.finfo(float).eps * scale
            keep = c.size
            while keep > 1 and abs(c[keep - 1]) <= floor:
                keep -= 1
            c = c[:keep]
            if keep == 1 and abs(c[0]) <= floor:
                c = np.zeros(1)
        c.setflags(write=False)
        self._c = c
        self._roots = None

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def is_zero(self) -> bool:
        return self._c.size == 1 and self._c[0] == 0.0

    def degree(self) -> int:
        """Degree of the polynomial; -1 for the zero polynomial."""
        return -1 if self.is_zero else self._c.size - 1

    @property
    def leading(self) -> float:
        return float(self._c[-1])

    def __call__(self, s):
        return npp.polyval(s, self._c)

    def _sum_trim(self, other: "Polynomial", c: np.ndarray) -> "Polynomial":
        # leading coefficients below the cancellation floor of the addition
        # are residue of a cancelled leading term, not data
        floor = EPS_TRIM * max(np.max(np.abs(self._c)), np.max(np.abs(other._c)))
        keep = c.size
        while keep > 1 and abs(c[keep - 1]) <= floor:
            keep -= 1
        return Polynomial(c[:keep])

    def __add__(self, other: "Polynomial") -> "Polynomial":
        return self._sum_trim(other, npp.polyadd(self._c, other._c))

    def __sub__(self, other: "Polynomial") -> "Polynomial":
        return self._sum_trim(other, npp.polysub(self._c, other._c))

    def __neg__(self) -> "Polynomial":
        out = Polynomial(-self._c)
        if self._roots is not None:
            out._adopt_roots(self._roots)
        return out

    def __mul__(self, other):
        if isinstance(other, Polynomial):
            if self.is_zero or other.is_zero:
                return ZERO_POLY
            out = Polynomial(npp.polymul(self._c, other._c))
            # the product's roots are the exact multiset union; propagating
            # them keeps downstream factor matching exact instead of relying
            # on re-solving an ill-conditioned product polynomial
            if self._roots is not None and other._roots is not None:
                out._adopt_roots(np.concatenate([self._roots, other._roots]))
            return out
        out = Polynomial(self._c * float(other))
        if self._roots is not None:
            out._adopt_roots(self._roots)
        return out

    __rmul__ = __mul__

    def _adopt_roots(self, roots: np.ndarray) -> None:
        if self.degree() == len(roots):
            r = np.asarray(roots, dtype=complex).copy()
            r.setflags(write=False)
            self._roots = r

    def roots(self) -> np.ndarray:
        """All complex roots, via eigenvalues of the companion matrix."""
        if self.is_zero:
            raise ValueError("roots undefined for the zero polynomial")
        if self._roots is None:
            if self.degree() == 0:
                r = np.zeros(0, dtype=complex)
            else:
                r = npp.polyroots(self._c)
            r = np.asarray(r, dtype=complex)
            r.setflags(write=False)
            self._roots = r
        return self._roots

    def monic(self) -> tuple["Polynomial", float]:
        """Return (self / leading, leading)."""
        if self.is_zero:
            raise ValueError("zero polynomial cannot be made monic")
        lead = self.leading
        out = Polynomial(self._c / lead)
        if self._roots is not None:
            out._adopt_roots(self._roots)
        return out, lead

    def __repr__(self) -> str:
        return f"Polynomial({self._c.tolist()})"

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        parts = []
        for k, ck in enumerate(self._c):
            if ck == 0.0:
                continue
            if k == 0:
                parts.append(f"{ck:g}")
            elif k == 1:
                parts.append(f"{ck:g} s")
            else:
                parts.append(f"{ck:g} s^{k}")
        return " + ".join(parts).replace("+ -", "- ")


ZERO_POLY = Polynomial([0.0])
ONE_POLY = Polynomial([1.0])
S_POLY = Polynomial([0.0, 1.0])


def polynomial_from_roots(roots, lead: float = 1.0) -> Polynomial:
    """Real polynomial with the given root multiset and leading coefficient.

    Conjugate pairs are multiplied as real quadratics; a residual tiny
    imaginary part (from an asymmetric multiset) is discarded.
    """
    roots = np.asarray(roots, dtype=complex)
    c = np.array([1.0])
    used = np.zeros(roots.size, dtype=bool)
    order = np.lexsort((roots.imag, roots.real))
    folded = False
    for i in order:
        if used[i]:
            continue
        used[i] = True
        r = roots[i]
        if abs(r.imag) <= 1e-12 * (1.0 + abs(r)):
            c = npp.polymul(c, [-r.real, 1.0])
            continue
        # find the closest unused conjugate partner
        cand = np.flatnonzero(~used)
        if cand.size:
            d = np.abs(roots[cand] - np.conj(r))
            j = cand[int(np.argmin(d))]
        else:
            j = -1
        if j >= 0 and abs(roots[j] - np.conj(r)) <= 1e-6 * (1.0 + abs(r)):
            used[j] = True
            c = npp.polymul(c, [abs(r) ** 2, -2.0 * r.real, 1.0])
        else:
            # lone complex root: fold into a real factor at its real part
            c = npp.polymul(c, [-r.real, 1.0])
            folded = True
    out = Polynomial(c * lead)
    if not folded:
        out._adopt_roots(roots)
    return out


def _pair_roots(rn: np.ndarray, rd: np.ndarray, tol: float, radii=None):
    """Greedy nearest pairing of two root multisets.

    Returns boolean masks (cancel_n, cancel_d) marking paired roots whose
    distance is within ``tol * (1 + |root|)`` or, when ``radii`` is given as
    (radii_n, radii_d), within the pair's combined uncertainty radii.
    """
    cn = np.zeros(rn.size, dtype=bool)
    cd = np.zeros(rd.size, dtype=bool)
    if rn.size == 0 or rd.size == 0:
        return cn, cd
    dist = np.abs(rn[:, None] - rd[None, :])
    scale = 1.0 + np.maximum(np.abs(rn)[:, None], np.abs(rd)[None, :])
    limit = tol * scale
    if radii is not None:
        limit = np.maximum(limit, radii[0][:, None] + radii[1][None, :])
    marked = dist <= limit
    # greedy pairing on actual distance, restricted to admissible pairs
    work = np.where(marked, dist, np.inf)
    while np.isfinite(work).any():
        i, j = np.unravel_index(np.argmin(work), work.shape)
        cn[i] = True
        cd[j] = True
        work[i, :] = np.inf
        work[:, j] = np.inf
    return cn, cd


def _root_uncertainty(poly: Polynomial, roots: np.ndarray) -> np.ndarray:
    """First-order backward-error radius of each computed root.

    The Newton correction |p(r)| / |p'(r)| measures how far the computed
    root may sit from a true root of the coefficient data; it inflates
    automatically for multiple roots, whose computed copies scatter as
    eps**(1/multiplicity).  Capped so that catastrophic conditioning cannot
    trigger wholesale cancellation.
    """
    dp = npp.polyder(poly.coeffs)
    vals = np.abs(npp.polyval(roots, poly.coeffs))
    dvals = np.abs(npp.polyval(roots, dp))
    with np.errstate(divide="ignore", invalid="ignore"):
        rad = np.where(dvals > 0, vals / dvals, np.inf)
    cap = 1e-4 * (1.0 + np.abs(roots))
    # the Newton correction underestimates the scatter of a multiple root by
    # roughly the multiplicity, hence the generous safety factor
    return np.minimum(16.0 * rad, cap)


class RationalFunction:
    """Quotient of two real polynomials, kept in canonical form.

    Canonical form: monic denominator; no numerator/denominator root pair
    closer than ``eps_cancel`` (relative); the zero function is 0/1.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=ONE_POLY, *, tol: ToleranceConfig | None = None) -> None:
        num = num if isinstance(num, Polynomial) else Polynomial(num)
        den = den if isinstance(den, Polynomial) else Polynomial(den)
        if den.is_zero:
            raise ZeroDivisionError("rational function with zero denominator")
        cfg = tol or active()
        if num.is_zero:
            self.num = ZERO_POLY
            self.den = ONE_POLY
            return
        num, den = _cancel_common_roots(num, den, cfg)
        den, lead = den.monic()
        self.num = num * (1.0 / lead)
        self.den = den

    # --- constructors -------------------------------------------------

    @staticmethod
    def zero() -> "RationalFunction":
        return RationalFunction(ZERO_POLY)

    @staticmethod
    def one() -> "RationalFunction":
        return RationalFunction(ONE_POLY)

    @staticmethod
    def constant(c: float) -> "RationalFunction":
        return RationalFunction(Polynomial([float(c)]))

    @staticmethod
    def s() -> "RationalFunction":
        """The Laplace variable itself."""
        return RationalFunction(S_POLY)

    # --- predicates and views ------------------------------------------

    @property
    def is_zero(self) -> bool:
        return self.num.is_zero

    def relative_degree(self) -> int:
        """deg(den) - deg(num); negative for improper functions."""
        if self.is_zero:
            raise ValueError("relative degree undefined for the zero function")
        return self.den.degree() - self.num.degree()

    def is_proper(self, strictly: bool = False) -> bool:
        if self.is_zero:
            return True
        r = self.relative_degree()
        return r >= 1 if strictly else r >= 0

    def poles(self) -> np.ndarray:
        if self.den.degree() == 0:
            return np.zeros(0, dtype=complex)
        return self.den.roots()

    def zeros(self) -> np.ndarray:
        if self.is_zero or self.num.degree() == 0:
            return np.zeros(0, dtype=complex)
        return self.num.roots()

    def effective_poles(self, band: float = CLASSIFICATION_BAND) -> np.ndarray:
        """Poles after discarding pole/zero pairs tighter than ``band``."""
        p = self.poles()
        z = self.zeros()
        if p.size == 0 or z.size == 0:
            return p
        cz, cp = _pair_roots(z, p, band)
        return p[~cp]

    def is_stable(self, tol: ToleranceConfig | None = None) -> bool:
        """Membership in the stable proper class (all poles in Re < 0)."""
        cfg = tol or active()
        if self.is_zero:
            return True
        if not self.is_proper():
            return False
        return bool(np.all(self.effective_poles().real < -cfg.eps_stab))

    def classify(self, tol: ToleranceConfig | None = None) -> dict:
        return {"proper": self.is_proper(), "stable": self.is_stable(tol)}

    # --- evaluation -----------------------------------------------------

    def __call__(self, s0: complex) -> complex:
        den_val = self.den(s0)
        if self.den.degree() > 0:
            d = np.min(np.abs(self.den.roots() - s0))
            if d <= 1e-9 * (1.0 + abs(s0)):
                raise ValueError(f"evaluation at a pole of the rational function: s={s0}")
        return self.num(s0) / den_val

    # --- arithmetic ------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, RationalFunction):
            return other
        if isinstance(other, (int, float)):
            return RationalFunction.constant(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        # add over the common-denominator extension: multiplying the two
        # denominators outright would square shared factors, which root
        # clustering can no longer separate after a few compositions
        den, cof_self, cof_other = _den_union(self.den, other.den)
        num = self.num * cof_self + other.num * cof_other
        return RationalFunction(num, den)

    __radd__ = __add__

    def __neg__(self):
        return RationalFunction(-self.num, self.den)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if self.is_zero or other.is_zero:
            return RationalFunction.zero()
        return RationalFunction(self.num * other.num, self.den * other.den)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        if other.is_zero:
            raise ZeroDivisionError("division by the zero rational function")
        if self.is_zero:
            return RationalFunction.zero()
        return RationalFunction(self.num * other.den, self.den * other.num)

    def __rtruediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other / self

    # --- misc -------------------------------------------------------------

    def approx_equal(self, other: "RationalFunction", rtol: float = 1e-9) -> bool:
        """Coefficient-wise equality of the canonical forms."""
        a, b = self, other
        if a.is_zero or b.is_zero:
            return a.is_zero and b.is_zero
        if a.num.degree() != b.num.degree() or a.den.degree() != b.den.degree():
            return False
        scale = max(np.max(np.abs(a.num.coeffs)), np.max(np.abs(b.num.coeffs)))
        return bool(
            np.allclose(a.num.coeffs, b.num.coeffs, rtol=rtol, atol=rtol * scale)
            and np.allclose(a.den.coeffs, b.den.coeffs, rtol=rtol, atol=rtol)
        )

    def __repr__(self) -> str:
        return f"RationalFunction({self.num.coeffs.tolist()}, {self.den.coeffs.tolist()})"

    def __str__(self) -> str:
        if self.is_zero:
            return "0"
        if self.den.degree() == 0:
            return f"({self.num})"
        return f"({self.num}) / ({self.den})"


def _newton_polish(c: np.ndarray, z: complex, steps: int = 4) -> complex:
    dc = npp.polyder(c)
    for _ in range(steps):
        dv = npp.polyval(z, dc)
        if dv == 0:
            break
        step = npp.polyval(z, c) / dv
        # at a multiple root both value and derivative vanish and the ratio
        # is noise; never leave the root's neighbourhood
        if abs(step) > 0.05 * (1.0 + abs(z)):
            break
        z = z - step
        if abs(step) <= 1e-15 * (1.0 + abs(z)):
            break
    return z


def _deflate(poly: Polynomial, removed: np.ndarray, keep_labels: np.ndarray) -> Polynomial:
    """Divide out the factors at ``removed``, polished against the data.

    Root positions may be inherited labels that drifted from the actual
    coefficient data, so each one is refined by Newton steps on the current
    quotient before the division; deflating by a (near-)exact root of the
    data keeps all remaining coefficient information intact.
    """
    c = poly.coeffs.copy()
    pending = list(removed)
    while pending:
        r = pending.pop()
        if abs(r.imag) <= 1e-12 * (1.0 + abs(r)):
            z = _newton_polish(c, complex(r.real))
            if abs(z.imag) > 1e-9 * (1.0 + abs(z)) or abs(z - r.real) > 0.1 * (1.0 + abs(r)):
                z = complex(r.real)
            c = npp.polydiv(c, np.array([-z.real, 1.0]))[0]
            continue
        # pull the conjugate partner to keep the division real
        best, best_d = None, np.inf
        for idx, r2 in enumerate(pending):
            d = abs(r2 - np.conj(r))
            if d < best_d:
                best, best_d = idx, d
        z = _newton_polish(c, complex(r))
        if abs(z - r) > 0.1 * (1.0 + abs(r)):
            z = complex(r)  # polish ran away; keep the label
        if best is not None and best_d <= 1e-6 * (1.0 + abs(r)):
            pending.pop(best)
            c = npp.polydiv(c, np.array([abs(z) ** 2, -2.0 * z.real, 1.0]))[0]
        else:
            c = npp.polydiv(c, np.array([-z.real, 1.0]))[0]
    out = Polynomial(c)
    out._adopt_roots(np.asarray(keep_labels, dtype=complex))
    return out


def _conjugate_units(roots: np.ndarray):
    """Group a conjugate-symmetric multiset into units.

    Each unit is (member_indices, representative); a unit is a single
    near-real root or an exact conjugate pair.
    """
    units = []
    used = np.zeros(roots.size, dtype=bool)
    for i, r in enumerate(roots):
        if used[i]:
            continue
        used[i] = True
        if abs(r.imag) <= 1e-12 * (1.0 + abs(r)):
            units.append(((i,), complex(r.real, abs(r.imag))))
            continue
        partner = None
        best = np.inf
        for j in range(i + 1, roots.size):
            if used[j]:
                continue
            d = abs(roots[j] - np.conj(r))
            if d < best:
                partner, best = j, d
        if partner is not None and best <= 1e-9 * (1.0 + abs(r)):
            used[partner] = True
            units.append(((i, partner), complex(r.real, abs(r.imag))))
        else:
            units.append(((i,), complex(r.real, abs(r.imag))))
    return units


def _cancel_common_roots(num: Polynomial, den: Polynomial, cfg: ToleranceConfig):
    """Remove numerator/denominator root clusters that overlap.

    Conjugate-closed root units are linked into clusters when within
    ``eps_cancel`` or within their combined backward-error radii (computed
    copies of a multiple root scatter as eps**(1/multiplicity), so a fixed
    radius cannot pair them).  Matched units are deflated from both sides'
    coefficient data; the reduction is accepted only if it leaves the
    function value unchanged at far-field probes.  Failing that, plain
    pairs within ``eps_cancel`` are removed (canonical-form requirement).
    """
    if num.degree() < 1 or den.degree() < 1:
        return num, den
    rn = num.roots()
    rd = den.roots()
    radii_n = _root_uncertainty(num, rn)
    radii_d = _root_uncertainty(den, rd)

    un = _conjugate_units(rn)
    ud = _conjugate_units(rd)
    reprs = [u[1] for u in un] + [u[1] for u in ud]
    sizes = [len(u[0]) for u in un] + [len(u[0]) for u in ud]
    urad = [max(radii_n[list(u[0])]) for u in un] + [max(radii_d[list(u[0])]) for u in ud]
    nn = len(un)
    k = len(reprs)
    parent = list(range(k))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    linked = False
    for i in range(k):
        for j in range(i + 1, k):
            scale = 1.0 + max(abs(reprs[i]), abs(reprs[j]))
            if abs(reprs[i] - reprs[j]) <= max(cfg.eps_cancel * scale, urad[i] + urad[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[ri] = rj
                if (i < nn) != (j < nn):
                    linked = True
    if linked:
        groups: dict[int, list[int]] = {}
        for i in range(k):
            groups.setdefault(find(i), []).append(i)
        mask_n = np.zeros(rn.size, dtype=bool)
        mask_d = np.zeros(rd.size, dtype=bool)
        for members in groups.values():
            num_units = [i for i in members if i < nn]
            den_units = [i - nn for i in members if i >= nn]
            if not num_units or not den_units:
                continue
            # match equal-size units across the cluster, nearest first
            pairs = sorted(
                (
                    (abs(un[i][1] - ud[j][1]), i, j)
                    for i in num_units
                    for j in den_units
                    if len(un[i][0]) == len(ud[j][0])
                ),
                key=lambda x: x[0],
            )
            taken_n: set[int] = set()
            taken_d: set[int] = set()
            for _, i, j in pairs:
                if i in taken_n or j in taken_d:
                    continue
                taken_n.add(i)
                taken_d.add(j)
                mask_n[list(un[i][0])] = True
                mask_d[list(ud[j][0])] = True
        if mask_n.any():
            reduced = (
                _deflate(num, rn[mask_n], rn[~mask_n]),
                _deflate(den, rd[mask_d], rd[~mask_d]),
            )
            if _reduction_preserves_value(
                num,
                den,
                reduced[0],
                reduced[1],
                np.concatenate([rn, rd]),
                removed=np.concatenate([rn[mask_n], rd[mask_d]]),
            ):
                return reduced
    # canonical-form tier: pairs inside eps_cancel cancel unconditionally
    cn, cd = _pair_roots(rn, rd, cfg.eps_cancel)
    if not cn.any():
        return num, den
    return (
        _deflate(num, rn[cn], rn[~cn]),
        _deflate(den, rd[cd], rd[~cd]),
    )


def _reduction_preserves_value(num, den, new_num, new_den, roots, budget=3e-9, removed=None) -> bool:
    """Probe test: a sound reduction leaves the function value unchanged.

    Far-field probes sit outside the root cloud (any falsely merged pair
    shifts the value there by roughly its separation over the distance);
    mid-field probes on the imaginary axis catch pole-position drift in the
    band where frequency responses are compared; ring probes around each
    removed root catch damage local to the cancellation site.
    """
    radius = 2.0 * (1.0 + max(np.abs(roots), default=0.0))
    probes = [scale_r * radius * np.exp(1j * ang) for scale_r, ang in
              ((1.0, 0.37), (1.7, 1.91), (2.9, 3.51))]
    for w in (0.07, 0.31, 1.0, 3.3, 11.0, 47.0):
        s0 = 1j * w
        d = np.min(np.abs(roots - s0)) if roots.size else 1.0
        if d >= 0.03 * (1.0 + w):
            probes.append(s0)
    if removed is not None:
        for r in removed[:8]:
            for ang in (0.9, 2.7):
                s0 = r + 0.25 * (1.0 + abs(r)) * np.exp(1j * ang)
                if roots.size and np.min(np.abs(roots - s0)) < 1e-4 * (1.0 + abs(s0)):
                    continue
                probes.append(s0)
    for s0 in probes:
        dv, dv2 = den(s0), new_den(s0)
        if dv == 0 or dv2 == 0:
            return False
        v1 = num(s0) / dv
        v2 = new_num(s0) / dv2
        if abs(v2 - v1) > budget * max(1.0, abs(v1)):
            return False
    return True


def _den_union(pa: Polynomial, pb: Polynomial):
    """Least common denominator of two monic denominators by root matching.

    Returns (den, cof_a, cof_b) with den = pa * cof_a ~ pb * cof_b, where
    cof_a collects the roots of pb unmatched in pa and vice versa.  Shared
    roots are counted once, so repeated additions over a common denominator
    do not inflate multiplicities.  Only tight matches (identical factor
    lineage or within 1e-9) are merged: merging substitutes one root for the
    other, so a loose merge would silently change the function value.
    """
    if pa.degree() < 1:
        return pb, pb, ONE_POLY
    if pb.degree() < 1:
        return pa, ONE_POLY, pa
    ra, rb = pa.roots(), pb.roots()
    ca, cb = _pair_roots(ra, rb, 1e-9)
    if not cb.any():
        return pa * pb, pb, pa
    cof_a = polynomial_from_roots(rb[~cb]) if (~cb).any() else ONE_POLY
    cof_b = polynomial_from_roots(ra[~ca]) if (~ca).any() else ONE_POLY
    return pa * cof_a, cof_a, cof_b


def poly_roots(p: Polynomial) -> np.ndarray:
    """Roots of ``p`` (companion-matrix eigenvalues); errors on the zero poly."""
    return p.roots()
