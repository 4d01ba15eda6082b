"""Vectorized exhaustive enumeration over keys, pads and outcome branches.

Evaluates, for one scenario (graph, angles, I/O mode, server behavior),
either the real protocol or its ideal-world relaxation across the full
product space of client randomness, recording

  * the exact joint distribution of the server's classical view
    (per-round measurement-angle digit and the server's raw outcome bit),
  * the per-key decoded output channel's deviation from a reference,
  * probability-conservation error.

The quantum evolution is organised so each key costs O(m * 2^n): qubits
are laid out with bit position equal to measurement rank, so every
measurement peels the lowest bit off a contiguous array, and all outcome
branches of one key share prefix work through a breadth-first level array.

The ideal world reuses the same inner loop through two exact identities:
a resource-side EPR measurement at adaptive angle is a remote preparation
of the server's half (so it becomes a phase fold into the server's
measurement angle), and the resource's teleport bits are uniform fair
coins (so they enumerate like key bits).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

try:
    from numba import njit, prange

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap

    prange = range

WORLD_REAL = 0
WORLD_IDEAL = 1

_SQRT2_INV = 1.0 / math.sqrt(2.0)


@dataclass
class EnumTables:
    """Integer tables driving the kernel; see ``build_enum_tables``."""

    world: int
    n: int
    m: int
    b: int
    n_t: int
    measured_nodes: tuple
    output_nodes: tuple
    quantum_output: bool
    base_cz: np.ndarray          # complex128 [2^n_t, 2^n]
    theta_base: np.ndarray       # int64 [m]
    own_tslot: np.ndarray        # int64 [m], -1 when no own t bit
    tmask_theta: np.ndarray      # int64 [m], bitmask over t slots
    cterm: np.ndarray            # int64 [m], classical-input pi-shift (ideal fold)
    xdep: np.ndarray             # int64 [m], rank of the X-signal source or -1
    zmask: np.ndarray            # int64 [m], rank bitmask of Z-signal sources
    offset_h: int
    report_zero: int
    out_xdep: np.ndarray         # int64 [n_out] (quantum output) or ranks (classical)
    out_zmask: np.ndarray        # int64 [n_out]
    out_tmask: np.ndarray        # int64 [n_out], t-slot parity mask for t(o)
    out_rank: np.ndarray         # int64 [n_out], classical-output ranks
    n_keys: int
    hist_size: int

    def bins(self) -> tuple:
        """Per-round alphabet spec of the classical view histogram."""
        return tuple((node, 1 << self.b, 2) for node in self.measured_nodes)


def _parity64(x: int) -> int:
    x ^= x >> 32
    x ^= x >> 16
    x ^= x >> 8
    x ^= x >> 4
    x ^= x >> 2
    x ^= x >> 1
    return x & 1


@njit(cache=True, fastmath=True)
def _popparity(x):
    p = 0
    while x:
        p ^= 1
        x &= x - 1
    return p


@njit(cache=True, fastmath=True)
def _enum_chunk(world, n, m, big_m, half_m, n_t, key_lo, key_hi, base_cz,
                theta_base, own_tslot, tmask_theta, cterm, xdep, zmask,
                offset_h, report_zero, quantum_output, out_xdep, out_zmask,
                out_tmask, out_rank, exp_pos, exp_neg, strides, weight,
                ref_chan, ref_dist, have_ref, hist):
    dim = 1 << n
    dim_o = 1 << (n - m)
    lev = np.empty(dim, dtype=np.complex128)
    nxt = np.empty(dim, dtype=np.complex128)
    tpart = np.empty(1 << m, dtype=np.int64)
    tnext = np.empty(1 << m, dtype=np.int64)
    spart = np.empty(1 << m, dtype=np.int64)
    snext = np.empty(1 << m, dtype=np.int64)
    pads = np.empty(m, dtype=np.int64)
    rbits = np.empty(m, dtype=np.int64)
    tbits = np.empty(max(n_t, 1), dtype=np.int64)
    theta_eff = np.empty(m, dtype=np.int64)
    n_out_q = 0
    if quantum_output == 1:
        dd = dim_o
        while dd > 1:
            n_out_q += 1
            dd >>= 1
    n_out_c = out_rank.shape[0]
    dim_dist = 1 << n_out_c
    chan = np.empty((dim_o, dim_o), dtype=np.complex128)
    dist = np.empty(dim_dist, dtype=np.float64)
    vout = np.empty(dim_o, dtype=np.complex128)
    max_chan_err = 0.0
    max_prob_err = 0.0

    for key in range(key_lo, key_hi):
        idx = key
        for d in range(m):
            pads[d] = idx % big_m
            idx //= big_m
        for d in range(m):
            rbits[d] = idx & 1
            idx >>= 1
        t_row = 0
        for j in range(n_t):
            tbits[j] = idx & 1
            idx >>= 1
            t_row |= tbits[j] << j

        # angle bookkeeping after the input-pad updates
        for d in range(m):
            v = theta_base[d]
            if own_tslot[d] >= 0 and tbits[own_tslot[d]] == 1:
                v = (-v) % big_m
            tm = tmask_theta[d]
            par = 0
            for j in range(n_t):
                if (tm >> j) & 1 and tbits[j] == 1:
                    par ^= 1
            if par:
                v = (v + half_m) % big_m
            theta_eff[d] = v

        # initial amplitudes: base state times entangling signs times pads
        for x in range(dim):
            lev[x] = base_cz[t_row, x]
        if world == WORLD_REAL:
            for d in range(m):
                k = pads[d]
                if k != 0:
                    ph = exp_pos[k]
                    step = 1 << d
                    blk = step << 1
                    for start in range(step, dim, blk):
                        for x in range(start, start + step):
                            lev[x] *= ph
        tpart[0] = 0
        spart[0] = 0

        size = dim
        nb = 1
        for d in range(m):
            half = size >> 1
            for j in range(nb):
                smask = spart[j]
                sx = 0
                if xdep[d] >= 0:
                    sx = (smask >> xdep[d]) & 1
                sz = _popparity(smask & zmask[d])
                phip = theta_eff[d]
                if sx:
                    phip = (-phip) % big_m
                if sz:
                    phip = (phip + half_m) % big_m
                if world == WORLD_REAL:
                    delta = (phip + rbits[d] * half_m + pads[d]) % big_m
                    eff = (delta + offset_h) % big_m
                else:
                    # remote preparation: the resource's measurement folds
                    # into the server's basis as a pure angle shift; the
                    # teleport pad form keeps Z outside X, so no t-sign.
                    delta = pads[d]
                    fold = (delta - phip + rbits[d] * half_m + cterm[d]) % big_m
                    eff = (delta + offset_h - fold) % big_m
                ph = exp_neg[eff]
                src = j * size
                dst0 = (j << 1) * half
                dst1 = dst0 + half
                for y in range(half):
                    a = lev[src + 2 * y]
                    bamp = ph * lev[src + 2 * y + 1]
                    nxt[dst0 + y] = (a + bamp) * _SQRT2_INV
                    nxt[dst1 + y] = (a - bamp) * _SQRT2_INV
                for bb in range(2):
                    jj = (j << 1) | bb
                    stilde = 0 if report_zero else bb
                    sdec = stilde ^ rbits[d]
                    tnext[jj] = tpart[j] + delta * strides[d] + (bb << d)
                    snext[jj] = spart[j] | (sdec << d)
            tmpc = lev
            lev = nxt
            nxt = tmpc
            tmpi = tpart
            tpart = tnext
            tnext = tmpi
            tmpi = spart
            spart = snext
            snext = tmpi
            size = half
            nb <<= 1

        # leaves: per-branch output vectors and the classical view bin
        tot = 0.0
        if have_ref == 1 and quantum_output == 1:
            for a in range(dim_o):
                for c in range(dim_o):
                    chan[a, c] = 0.0
        if have_ref == 1 and quantum_output == 0:
            for a in range(dim_dist):
                dist[a] = 0.0
        for j in range(nb):
            p = 0.0
            base = j * dim_o
            for y in range(dim_o):
                amp = lev[base + y]
                p += amp.real * amp.real + amp.imag * amp.imag
            tot += p
            hist[tpart[j]] += weight * p
            if have_ref == 0:
                continue
            smask = spart[j]
            if quantum_output == 1:
                for y in range(dim_o):
                    vout[y] = lev[base + y]
                for k in range(n_out_q):
                    # k-th output bit within the leaf index
                    sxo = 0
                    if out_xdep[k] >= 0:
                        sxo = (smask >> out_xdep[k]) & 1
                    szo = _popparity(smask & out_zmask[k])
                    tm = out_tmask[k]
                    for jj in range(n_t):
                        if (tm >> jj) & 1 and tbits[jj] == 1:
                            szo ^= 1
                    bit = n_out_q - 1 - k
                    if sxo:
                        stepk = 1 << bit
                        for start in range(0, dim_o, stepk << 1):
                            for y in range(start, start + stepk):
                                tmp = vout[y]
                                vout[y] = vout[y + stepk]
                                vout[y + stepk] = tmp
                    if szo:
                        stepk = 1 << bit
                        for start in range(stepk, dim_o, stepk << 1):
                            for y in range(start, start + stepk):
                                vout[y] = -vout[y]
                for a in range(dim_o):
                    for c in range(dim_o):
                        chan[a, c] += vout[a] * np.conj(vout[c])
            else:
                yy = 0
                for k in range(n_out_c):
                    bit_val = (smask >> out_rank[k]) & 1
                    yy |= bit_val << (n_out_c - 1 - k)
                dist[yy] += p
        err = abs(tot - 1.0)
        if err > max_prob_err:
            max_prob_err = err
        if have_ref == 1:
            if quantum_output == 1:
                for a in range(dim_o):
                    for c in range(dim_o):
                        dv = chan[a, c] - ref_chan[a, c]
                        e = abs(dv)
                        if e > max_chan_err:
                            max_chan_err = e
            else:
                for a in range(dim_dist):
                    e = abs(dist[a] - ref_dist[a])
                    if e > max_chan_err:
                        max_chan_err = e
    return max_chan_err, max_prob_err


@njit(cache=True, parallel=True, fastmath=True)
def _enum_all(world, n, m, big_m, half_m, n_t, n_keys, base_cz, theta_base,
              own_tslot, tmask_theta, cterm, xdep, zmask, offset_h,
              report_zero, quantum_output, out_xdep, out_zmask, out_tmask,
              out_rank, exp_pos, exp_neg, strides, weight, ref_chan, ref_dist,
              have_ref, hists, errs):
    nchunks = hists.shape[0]
    step = (n_keys + nchunks - 1) // nchunks
    for c in prange(nchunks):
        lo = c * step
        hi = min(lo + step, n_keys)
        if lo >= hi:
            continue
        ce, pe = _enum_chunk(world, n, m, big_m, half_m, n_t, lo, hi, base_cz,
                             theta_base, own_tslot, tmask_theta, cterm, xdep,
                             zmask, offset_h, report_zero, quantum_output,
                             out_xdep, out_zmask, out_tmask, out_rank,
                             exp_pos, exp_neg, strides, weight, ref_chan,
                             ref_dist, have_ref, hists[c])
        errs[c, 0] = ce
        errs[c, 1] = pe


def bin_index_of(deltas, bits, m, b):
    """Bin of one classical view record (per-rank angle digits, outcome bits)."""
    big = 1 << b
    idx = 0
    for d in range(m):
        idx += int(deltas[d]) * (big ** d) * (1 << m)
        idx += (int(bits[d]) & 1) << d
    return idx


def _delta_marginal(hist, measured_nodes, b, d):
    m = len(measured_nodes)
    big = 1 << b
    t = hist.reshape((big ** m, 1 << m))
    joint = t.sum(axis=1)
    t2 = joint.reshape((big,) * m, order="F")
    axes = tuple(q for q in range(m) if q != d)
    return t2.sum(axis=axes) if axes else t2


@dataclass
class EnumResult:
    hist: np.ndarray
    n_keys: int
    measured_nodes: tuple
    b: int
    chan_max_err: float
    prob_max_err: float

    def delta_marginal(self, node) -> np.ndarray:
        """Exact per-node distribution of the transmitted angle digit."""
        return _delta_marginal(self.hist, self.measured_nodes, self.b,
                               self.measured_nodes.index(node))


def run_enumeration(tables: EnumTables, reference_channel=None,
                    reference_dist=None, nchunks: int = 2) -> EnumResult:
    """Run the kernel over the whole key space and sum the chunk histograms."""
    dim_o = 1 << (tables.n - tables.m)
    have_ref = reference_channel is not None or reference_dist is not None
    ref_chan = (np.ascontiguousarray(reference_channel, dtype=np.complex128)
                if reference_channel is not None
                else np.zeros((dim_o, dim_o), dtype=np.complex128))
    ref_dist = (np.ascontiguousarray(reference_dist, dtype=np.float64)
                if reference_dist is not None
                else np.zeros(dim_o, dtype=np.float64))
    big = 1 << tables.b
    # delta digit strides sit above the m outcome bits for write locality
    strides = np.array([(big ** d) << tables.m for d in range(tables.m)],
                       dtype=np.int64)
    unit = math.pi / (1 << (tables.b - 1))
    exp_pos = np.exp(1j * unit * np.arange(big)).astype(np.complex128)
    exp_neg = np.exp(-1j * unit * np.arange(big)).astype(np.complex128)
    hists = np.zeros((nchunks, tables.hist_size), dtype=np.float64)
    errs = np.zeros((nchunks, 2), dtype=np.float64)
    weight = 1.0 / tables.n_keys
    _enum_all(tables.world, tables.n, tables.m, big, big // 2, tables.n_t,
              tables.n_keys, tables.base_cz, tables.theta_base,
              tables.own_tslot, tables.tmask_theta, tables.cterm, tables.xdep,
              tables.zmask, tables.offset_h, tables.report_zero,
              tables.quantum_output, tables.out_xdep, tables.out_zmask,
              tables.out_tmask, tables.out_rank, exp_pos, exp_neg, strides,
              weight, ref_chan, ref_dist, have_ref, hists, errs)
    return EnumResult(hists.sum(axis=0), tables.n_keys, tables.measured_nodes,
                      tables.b, float(errs[:, 0].max()), float(errs[:, 1].max()))
