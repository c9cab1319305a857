from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class PanelData:
    """Pseudo-observations on (0,1)^m grouped by time.

    Stored flat: ``u`` is (N, m) and ``t_idx`` holds the 0-based time of
    every row, sorted. ``ids`` are optional unit labels carried through I/O.
    """

    u: np.ndarray
    t_idx: np.ndarray
    T: int
    ids: np.ndarray | None = None

    def __post_init__(self):
        self.u = np.ascontiguousarray(self.u, dtype=np.float64)
        if self.u.ndim != 2:
            raise ValueError("u must be a 2-d array")
        self.t_idx = np.asarray(self.t_idx, dtype=np.int64)
        if self.t_idx.shape != (self.u.shape[0],):
            raise ValueError("t_idx must have one entry per observation")
        if self.u.shape[0]:
            if np.any(np.diff(self.t_idx) < 0):
                order = np.argsort(self.t_idx, kind="stable")
                self.u = self.u[order]
                self.t_idx = self.t_idx[order]
                if self.ids is not None:
                    self.ids = np.asarray(self.ids)[order]
            if self.t_idx[0] < 0 or self.t_idx[-1] >= self.T:
                raise ValueError("time indices out of range")
            if not np.all((self.u > 0) & (self.u < 1)):
                bad = np.argwhere(~((self.u > 0) & (self.u < 1)))[0, 0]
                raise ValueError(
                    f"observation {bad} at t={self.t_idx[bad] + 1} is not interior to (0,1)^m"
                )
        if self.ids is not None:
            self.ids = np.asarray(self.ids)

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def n_obs(self) -> int:
        return self.u.shape[0]

    @property
    def n_t(self) -> np.ndarray:
        return np.bincount(self.t_idx, minlength=self.T)

    def at(self, t: int) -> np.ndarray:
        """Observations at 1-based time ``t``."""
        return self.u[self.t_idx == t - 1]

    @classmethod
    def from_slices(cls, slices, m: int | None = None) -> "PanelData":
        slices = [np.asarray(s, dtype=np.float64) for s in slices]
        if m is None:
            m = next((s.shape[1] for s in slices if s.size), None)
            if m is None:
                raise ValueError("cannot infer m from empty slices")
        parts = [s.reshape(-1, m) for s in slices]
        u = np.concatenate(parts) if parts else np.empty((0, m))
        t_idx = np.concatenate([np.full(len(p), t, dtype=np.int64) for t, p in enumerate(parts)])
        return cls(u, t_idx, len(slices))

    def first_times(self, T: int) -> "PanelData":
        keep = self.t_idx < T
        ids = None if self.ids is None else self.ids[keep]
        return PanelData(self.u[keep], self.t_idx[keep], T, ids)

    def subset(self, mask) -> "PanelData":
        ids = None if self.ids is None else self.ids[mask]
        return PanelData(self.u[mask], self.t_idx[mask], self.T, ids)

    def split_per_time(self, n_fit: int) -> tuple["PanelData", "PanelData"]:
        """First ``n_fit`` rows of every time slice versus the rest."""
        rank = np.zeros(self.n_obs, dtype=np.int64)
        for t in range(self.T):
            idx = np.flatnonzero(self.t_idx == t)
            rank[idx] = np.arange(idx.size)
        fit = rank < n_fit
        return self.subset(fit), self.subset(~fit)
