"""Strategy portfolios and the strategy x setting performance matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .agent import StrategyConfig, validate_configuration


@dataclass(frozen=True)
class PortfolioEntry:
    config: StrategyConfig
    iteration: int  # construction order, 1-based
    seed: int

    @property
    def strategy_id(self) -> str:
        return f"theta{self.iteration}"


@dataclass
class Portfolio:
    """Ordered strategy set; the first entry is the plain-metric optimum."""

    entries: list[PortfolioEntry]

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ids(self) -> list[str]:
        return [entry.strategy_id for entry in self.entries]

    @property
    def configs(self) -> list[StrategyConfig]:
        return [entry.config for entry in self.entries]

    def to_list(self) -> list[dict]:
        return [
            {**entry.config.to_dict(), "provenance": {"iteration": entry.iteration, "seed": entry.seed}}
            for entry in self.entries
        ]

    @staticmethod
    def from_list(raw: list[dict]) -> "Portfolio":
        entries = []
        for position, item in enumerate(raw, start=1):
            data = dict(item)
            provenance = data.pop("provenance", {})
            entries.append(
                PortfolioEntry(
                    config=validate_configuration(data),
                    iteration=int(provenance.get("iteration", position)),
                    seed=int(provenance.get("seed", 0)),
                )
            )
        return Portfolio(entries=entries)


class IncompleteMatrixError(KeyError):
    def __init__(self, cells: list[tuple[str, str]]):
        preview = ", ".join(f"({t}, {s})" for t, s in cells[:5])
        suffix = "..." if len(cells) > 5 else ""
        super().__init__(f"missing matrix cells: {preview}{suffix}")
        self.cells = cells


class PerformanceMatrix:
    """Mean observed utility per (strategy, setting), with repetition counts.

    Cells accumulate, so repeated fills merge; means are recomputed from the
    running sums.
    """

    def __init__(self, strategy_ids: list[str] | None = None, setting_ids: list[str] | None = None):
        self.strategy_ids: list[str] = list(strategy_ids or [])
        self.setting_ids: list[str] = list(setting_ids or [])
        self._sums: dict[tuple[str, str], float] = {}
        self._counts: dict[tuple[str, str], int] = {}

    def _register(self, strategy_id: str, setting_id: str) -> None:
        if strategy_id not in self.strategy_ids:
            self.strategy_ids.append(strategy_id)
        if setting_id not in self.setting_ids:
            self.setting_ids.append(setting_id)

    def add_runs(self, strategy_id: str, setting_id: str, utilities: list[float]) -> None:
        self._register(strategy_id, setting_id)
        key = (strategy_id, setting_id)
        self._sums[key] = self._sums.get(key, 0.0) + float(sum(utilities))
        self._counts[key] = self._counts.get(key, 0) + len(utilities)

    def has(self, strategy_id: str, setting_id: str) -> bool:
        return self._counts.get((strategy_id, setting_id), 0) > 0

    def count(self, strategy_id: str, setting_id: str) -> int:
        return self._counts.get((strategy_id, setting_id), 0)

    def mean(self, strategy_id: str, setting_id: str) -> float:
        key = (strategy_id, setting_id)
        if self._counts.get(key, 0) == 0:
            raise IncompleteMatrixError([key])
        return self._sums[key] / self._counts[key]

    def missing_cells(
        self, strategy_ids: list[str] | None = None, setting_ids: list[str] | None = None
    ) -> list[tuple[str, str]]:
        strategies = strategy_ids if strategy_ids is not None else self.strategy_ids
        settings = setting_ids if setting_ids is not None else self.setting_ids
        return [(t, s) for t in strategies for s in settings if not self.has(t, s)]

    def require_complete(
        self, strategy_ids: list[str] | None = None, setting_ids: list[str] | None = None
    ) -> None:
        missing = self.missing_cells(strategy_ids, setting_ids)
        if missing:
            raise IncompleteMatrixError(missing)

    def column(self, setting_id: str, strategy_ids: list[str] | None = None) -> np.ndarray:
        strategies = strategy_ids if strategy_ids is not None else self.strategy_ids
        return np.asarray([self.mean(t, setting_id) for t in strategies], dtype=float)

    def strategy_mean(self, strategy_id: str, setting_ids: list[str] | None = None) -> float:
        settings = setting_ids if setting_ids is not None else self.setting_ids
        return float(np.mean([self.mean(strategy_id, s) for s in settings]))

    def to_rows(self) -> list[list]:
        """CSV rows: theta_id, setting_id, mean_r, n_runs."""
        rows = []
        for strategy_id in self.strategy_ids:
            for setting_id in self.setting_ids:
                if self.has(strategy_id, setting_id):
                    rows.append(
                        [strategy_id, setting_id, self.mean(strategy_id, setting_id),
                         self.count(strategy_id, setting_id)]
                    )
        return rows

    @staticmethod
    def from_rows(rows: list[list]) -> "PerformanceMatrix":
        matrix = PerformanceMatrix()
        for strategy_id, setting_id, mean_r, n_runs in rows:
            count = int(n_runs)
            if count < 1:
                raise ValueError(f"cell ({strategy_id}, {setting_id}) has n_runs {n_runs}")
            value = float(mean_r)
            matrix._register(str(strategy_id), str(setting_id))
            matrix._sums[(str(strategy_id), str(setting_id))] = value * count
            matrix._counts[(str(strategy_id), str(setting_id))] = count
        return matrix
