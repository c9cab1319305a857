"""Panel ingestion, pseudo-observations, synthetic panels and CSV formats."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from rotamix import rotation as rc
from rotamix.mixture import MixtureParams, sample_mixture
from rotamix.panel import PanelData
from rotamix.sampler import PosteriorDraws


class PanelFormatError(ValueError):
    pass


# --------------------------------------------------------------------------
# raw panels and rank transformation
# --------------------------------------------------------------------------


def _value_columns(df: pd.DataFrame, prefix: str) -> list[str]:
    cols = [c for c in df.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
    return sorted(cols, key=lambda c: int(c[len(prefix):]))


def read_csv_panel(path) -> tuple[pd.DataFrame, str]:
    """Read a panel CSV with header ``t,id,x1..xm`` or ``t,id,u1..um``.

    Returns the frame and the detected kind (``"raw"`` or ``"uniform"``).
    """
    try:
        df = pd.read_csv(path, float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise PanelFormatError(f"{path}: malformed CSV: {exc}") from exc
    if "t" not in df.columns:
        raise PanelFormatError(f"{path}: missing required column 't'")
    ucols, xcols = _value_columns(df, "u"), _value_columns(df, "x")
    if ucols and xcols:
        raise PanelFormatError(f"{path}: both u* and x* columns present")
    if not ucols and not xcols:
        raise PanelFormatError(f"{path}: no measurement columns (expected x1..xm or u1..um)")
    cols = ucols or xcols
    expected = [f"{cols[0][0]}{i}" for i in range(1, len(cols) + 1)]
    if cols != expected:
        raise PanelFormatError(f"{path}: measurement columns must be contiguous, got {cols}")
    for c in ["t", *cols]:
        bad = pd.to_numeric(df[c], errors="coerce").isna() | ~np.isfinite(
            pd.to_numeric(df[c], errors="coerce").fillna(0.0))
        if bad.any():
            rows = (np.flatnonzero(bad.to_numpy()) + 2).tolist()[:10]
            raise PanelFormatError(f"{path}: column {c!r} has non-numeric or non-finite values "
                                   f"at lines {rows}")
    if "id" not in df.columns:
        df["id"] = df.groupby("t").cumcount() + 1
    return df[["t", "id", *cols]], ("uniform" if ucols else "raw")


def _reindex_times(t: np.ndarray) -> tuple[np.ndarray, int]:
    values = np.unique(t)
    return np.searchsorted(values, t).astype(np.int64), len(values)


def rank_transform(raw: pd.DataFrame, scope: str = "global") -> PanelData:
    """Pseudo-observations rank / (n + 1) per variable, ties averaged.

    ``scope="global"`` ranks each variable over the whole panel;
    ``scope="per-time"`` ranks within every time slice.
    """
    if scope not in ("global", "per-time"):
        raise ValueError("scope must be 'global' or 'per-time'")
    if len(raw) == 0:
        raise ValueError("empty panel")
    cols = [c for c in raw.columns if c not in ("t", "id")]
    t_idx, T = _reindex_times(raw["t"].to_numpy())
    x = raw[cols].to_numpy(dtype=np.float64)
    u = np.empty_like(x)
    groups = [np.arange(len(raw))] if scope == "global" else \
        [np.flatnonzero(t_idx == t) for t in range(T)]
    for rows in groups:
        for l, name in enumerate(cols):
            col = x[rows, l]
            if np.unique(col).size < 2:
                where = "" if scope == "global" else f" at t={int(raw['t'].iloc[rows[0]])}"
                raise ValueError(f"variable {name!r} is constant{where}; cannot rank-transform")
            u[rows, l] = rankdata(col, method="average") / (len(col) + 1)
    return PanelData(u, t_idx, T, raw["id"].to_numpy() if "id" in raw else None)


def panel_from_frame(df: pd.DataFrame) -> PanelData:
    cols = [c for c in df.columns if c not in ("t", "id")]
    t_idx, T = _reindex_times(df["t"].to_numpy())
    return PanelData(df[cols].to_numpy(dtype=np.float64), t_idx, T, df["id"].to_numpy())


def load_panel(path, rank: bool | None = None, scope: str = "global") -> PanelData:
    """Load a panel CSV; raw measurements are always rank-transformed."""
    df, kind = read_csv_panel(path)
    if kind == "raw" or rank:
        return rank_transform(df, scope)
    return panel_from_frame(df)


def write_panel(path, data: PanelData) -> None:
    ids = data.ids if data.ids is not None else _default_ids(data)
    df = pd.DataFrame({"t": data.t_idx + 1, "id": ids})
    for l in range(data.m):
        df[f"u{l + 1}"] = data.u[:, l]
    df.to_csv(path, index=False)


def _default_ids(data: PanelData) -> np.ndarray:
    ids = np.zeros(data.n_obs, dtype=np.int64)
    for t in range(data.T):
        idx = np.flatnonzero(data.t_idx == t)
        ids[idx] = np.arange(1, idx.size + 1)
    return ids


# --------------------------------------------------------------------------
# synthetic panels
# --------------------------------------------------------------------------


def default_truth(T: int = 20) -> list[MixtureParams]:
    """Time-varying truth: fixed thetas (5, 3, 4, 3), drifting weights.

    pi_1 = (0.4, 0.25, 0.25, 0.1) in order (00, 10, 01, 11); afterwards
    pi_00 shrinks by 5% and pi_10 grows by 5% per step, pi_11 = 0.1 and
    pi_01 closes the simplex.
    """
    thetas = np.array([5.0, 3.0, 4.0, 3.0])
    pi = np.array([0.4, 0.25, 0.25, 0.1])
    out = [MixtureParams(pi, thetas)]
    for _ in range(1, T):
        p00, p10, p11 = 0.95 * pi[0], 1.05 * pi[1], 0.1
        pi = np.array([p00, p10, 1.0 - p00 - p10 - p11, p11])
        out.append(MixtureParams(pi, thetas))
    return out


def simulate_panel(truth: Sequence[MixtureParams] | Callable[[int], MixtureParams],
                   n_t, seed: int, T: int | None = None):
    """Sample ``n_t`` points per time from the per-time mixture ``truth``.

    ``truth`` is a sequence indexed by time or a callable of the 1-based
    time. Returns the panel and the list of true parameters.
    """
    if callable(truth):
        if T is None:
            raise ValueError("T is required with a generator callable")
        params = []
        for t in range(1, T + 1):
            try:
                params.append(truth(t))
            except ValueError as exc:
                raise ValueError(f"generator produced invalid parameters at t={t}: {exc}") from exc
    else:
        params = list(truth)
    T = len(params)
    n_t = np.broadcast_to(np.asarray(n_t, dtype=np.int64), (T,))
    rng = np.random.default_rng(seed)
    slices = [sample_mixture(p, int(n), rng)[0] for p, n in zip(params, n_t)]
    return PanelData.from_slices(slices, m=params[0].m), params


def truth_frame(params: Sequence[MixtureParams]) -> pd.DataFrame:
    rows = []
    for t, p in enumerate(params, start=1):
        for c in range(p.n_components):
            rows.append({"t": t, "component": rc.bit_label(c, p.m),
                         "pi": p.weights[c], "theta": p.thetas[c]})
    return pd.DataFrame(rows)


def read_truth(path) -> list[MixtureParams]:
    df = pd.read_csv(path, dtype={"component": str}, float_precision="round_trip")
    out = []
    for _, g in df.groupby("t", sort=True):
        m = len(g["component"].iloc[0])
        g = g.assign(code=[rc.bits_to_code(rc.as_bits(c)) for c in g["component"]]).sort_values("code")
        if len(g) != 2**m:
            raise PanelFormatError("truth table must list every component at every time")
        out.append(MixtureParams(g["pi"].to_numpy(), g["theta"].to_numpy()))
    return out


# --------------------------------------------------------------------------
# posterior draws
# --------------------------------------------------------------------------


DRAW_FILES = ("draws.csv", "betas.csv", "omega.csv", "eta.csv", "diagnostics.csv")


def write_draws(outdir, draws: PosteriorDraws) -> None:
    """Write draws as long CSV tables under ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    R, T, k = draws.pi.shape
    labels = np.array([rc.bit_label(c, draws.m) for c in range(k)])
    it = np.repeat(draws.iteration, T * k)
    ch = np.repeat(draws.chain, T * k)
    tt = np.tile(np.repeat(np.arange(1, T + 1), k), R)
    comp = np.tile(labels, R * T)
    pd.DataFrame({"iteration": it, "chain": ch, "t": tt, "component": comp,
                  "pi": draws.pi.ravel(), "theta": draws.theta.ravel()}) \
        .to_csv(outdir / "draws.csv", index=False)
    pd.DataFrame({"iteration": it, "chain": ch, "t": tt, "component": comp,
                  "eta": draws.eta.ravel()}).to_csv(outdir / "eta.csv", index=False)
    it_k = np.repeat(draws.iteration, k)
    ch_k = np.repeat(draws.chain, k)
    comp_k = np.tile(labels, R)
    pd.DataFrame({"iteration": it_k, "chain": ch_k, "component": comp_k,
                  "beta": draws.beta.ravel()}).to_csv(outdir / "betas.csv", index=False)
    pd.DataFrame({"iteration": it_k, "chain": ch_k, "component": comp_k,
                  "omega": draws.omega.ravel()}).to_csv(outdir / "omega.csv", index=False)
    diag = draws.diagnostics
    pd.DataFrame({"batch": diag["batch"], "kappa": diag["kappa"],
                  "acceptance_rate": diag["acceptance_rate"], "chain": diag["chain"]}) \
        .to_csv(outdir / "diagnostics.csv", index=False)
    with open(outdir / "provenance.json", "w") as fh:
        json.dump(draws.provenance, fh, indent=2, sort_keys=True, default=_json_default)


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, tuple):
        return list(obj)
    raise TypeError(f"not JSON serializable: {type(obj)}")


def read_draws(outdir) -> PosteriorDraws:
    outdir = Path(outdir)
    dr = pd.read_csv(outdir / "draws.csv", dtype={"component": str}, float_precision="round_trip")
    m = len(dr["component"].iloc[0])
    k = 2**m
    T = int(dr["t"].max())
    R = len(dr) // (T * k)
    order = ["chain", "iteration", "t", "code"]

    def _sorted(df):
        df = df.assign(code=df["component"].map(lambda s: rc.bits_to_code(rc.as_bits(s))))
        return df.sort_values(order[:2] + [c for c in order[2:] if c in df.columns], kind="stable")

    dr = _sorted(dr)
    eta = _sorted(pd.read_csv(outdir / "eta.csv", dtype={"component": str}, float_precision="round_trip"))
    be = _sorted(pd.read_csv(outdir / "betas.csv", dtype={"component": str}, float_precision="round_trip"))
    om = _sorted(pd.read_csv(outdir / "omega.csv", dtype={"component": str}, float_precision="round_trip"))
    diag = pd.read_csv(outdir / "diagnostics.csv", float_precision="round_trip")
    prov_path = outdir / "provenance.json"
    provenance = json.loads(prov_path.read_text()) if prov_path.exists() else {}
    first = dr.iloc[:: T * k]
    return PosteriorDraws(
        m=m,
        pi=dr["pi"].to_numpy().reshape(R, T, k),
        theta=dr["theta"].to_numpy().reshape(R, T, k),
        beta=be["beta"].to_numpy().reshape(R, k),
        omega=om["omega"].to_numpy().reshape(R, k),
        eta=eta["eta"].to_numpy().astype(np.int64).reshape(R, T, k),
        iteration=first["iteration"].to_numpy().astype(np.int64),
        chain=first["chain"].to_numpy().astype(np.int64),
        diagnostics={
            "chain": diag["chain"].to_numpy().astype(np.int64),
            "batch": diag["batch"].to_numpy().astype(np.int64),
            "kappa": diag["kappa"].to_numpy(),
            "acceptance_rate": diag["acceptance_rate"].to_numpy(),
        },
        provenance=provenance,
    )
