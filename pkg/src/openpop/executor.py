"""Population query evaluation under the three visibility levels.

CLOSED answers straight off the chosen sample; SEMI-OPEN reweights it
(inverse inclusion probability when the mechanism is declared, IPF against
marginals otherwise); OPEN additionally synthesizes tuples with a trained
generator and intersects the groups of several generated samples.

Every path flows through the same weighted-rows currency: COUNT(*) becomes
sum of weights, SUM(a) the weighted sum, AVG(a) their ratio.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .catalog import (
    NUMERIC,
    Catalog,
    PopulationDef,
    SampleRelation,
    Schema,
    schema_index,
    schema_kinds,
)
from .dialect import Select, Visibility
from .errors import (
    NoMetadataError,
    NoUsableSampleError,
    TypeMismatchError,
    UnknownMechanismNoMetadataError,
)
from .ipf import IpfConfig, IpfReport, ipf_fit
from .mswg import TrainConfig, TrainedGenerator, fingerprint, generate, train
from .predicate import Predicate, filter_rows

PROVENANCE_CLOSED = "closed"
PROVENANCE_MECHANISM = "semi_open_mechanism"
PROVENANCE_IPF_DIRECT = "semi_open_ipf_direct"
PROVENANCE_IPF_GLOBAL = "semi_open_ipf_global"
PROVENANCE_STORED = "semi_open_stored"
PROVENANCE_OPEN = "open"


@dataclass
class WeightedRows:
    """Tuples paired with nonnegative representation weights."""

    schema: Schema
    rows: list[tuple]
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if self.weights.shape != (len(self.rows),):
            raise TypeMismatchError("weights must align with rows")

    def index(self) -> dict[str, int]:
        return schema_index(self.schema)

    def filtered(self, predicate: Predicate | None) -> "WeightedRows":
        if predicate is None or not predicate:
            return self
        keep = filter_rows(predicate, self.rows, self.index())
        return WeightedRows(self.schema, [self.rows[i] for i in keep],
                            self.weights[keep])


@dataclass
class QueryAnswer:
    columns: list[str]
    rows: list[tuple]
    provenance: str
    diagnostics: dict = field(default_factory=dict)

    def group_keys(self, n_group: int) -> set[tuple]:
        return {row[:n_group] for row in self.rows}

    def to_text(self) -> str:
        cells = [[_fmt(v) for v in row] for row in self.rows]
        widths = [max([len(c)] + [len(row[i]) for row in cells])
                  for i, c in enumerate(self.columns)]
        lines = [" | ".join(c.ljust(w) for c, w in zip(self.columns, widths)),
                 "-+-".join("-" * w for w in widths)]
        for row in cells:
            lines.append(" | ".join(c.ljust(w) for c, w in zip(row, widths)))
        lines.append(f"({len(self.rows)} row{'s' if len(self.rows) != 1 else ''}, "
                     f"{self.provenance})")
        return "\n".join(lines)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(v) for v in row])
        return buffer.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExecOptions:
    ipf: IpfConfig = field(default_factory=IpfConfig)
    use_ipf: bool = True
    k_samples: int = 10
    train_config: TrainConfig | None = None
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))
    generator_cache: dict = field(default_factory=dict)


@dataclass
class Plan:
    sample_name: str
    population: str
    metadata_owner: str | None  # population whose marginals apply
    metadata_path: str | None   # "direct" | "global" | None


def _query_attributes(query: Select, pop: PopulationDef) -> set[str]:
    needed = set(query.plain_attributes())
    needed.update(a.arg for a in query.aggregates() if a.arg is not None)
    if query.predicate is not None:
        needed.update(query.predicate.attributes())
    needed.update(query.group_by)
    if pop.predicate is not None:
        needed.update(pop.predicate.attributes())
    return needed


def plan(query: Select, catalog: Catalog) -> Plan:
    """Pick the sample and metadata route for a query."""
    pop = catalog.population(query.source)
    needed = _query_attributes(query, pop)
    candidates = []
    for position, sample in enumerate(catalog.samples.values()):
        names = {a.name for a in sample.schema}
        if needed <= names:
            candidates.append((len(sample.rows), -position, sample.name))
    if not candidates:
        raise NoUsableSampleError(
            f"no sample covers attributes {sorted(needed)} of '{query.source}'")
    candidates.sort(reverse=True)  # most rows, ties by declaration order
    sample_name = candidates[0][2]

    metadata_owner = metadata_path = None
    if catalog.marginals_for(pop.name):
        metadata_owner, metadata_path = pop.name, "direct"
    else:
        gp = catalog.global_population()
        if gp.name != pop.name and catalog.marginals_for(gp.name):
            metadata_owner, metadata_path = gp.name, "global"

    sample = catalog.sample(sample_name)
    if query.visibility == Visibility.OPEN and metadata_path is None:
        raise NoMetadataError(
            f"OPEN query over '{pop.name}' needs marginal metadata")
    if (query.visibility == Visibility.SEMI_OPEN and sample.mechanism is None
            and metadata_path is None):
        raise UnknownMechanismNoMetadataError(
            f"sample '{sample_name}' has no declared mechanism and no "
            "marginals are registered")
    return Plan(sample_name, pop.name, metadata_owner, metadata_path)


# --- aggregation over weighted rows -------------------------------------------


def _check_aggregate_args(query: Select, schema: Schema) -> None:
    kinds = schema_kinds(schema)
    for agg in query.aggregates():
        if agg.arg is not None and kinds.get(agg.arg) != NUMERIC:
            raise TypeMismatchError(
                f"{agg.label()} requires a numeric attribute")


def evaluate_aggregates(weighted: WeightedRows, query: Select) -> QueryAnswer:
    """Group/aggregate filtered weighted rows; provenance filled by callers."""
    _check_aggregate_args(query, weighted.schema)
    data = weighted.filtered(query.predicate)
    index = data.index()
    aggs = query.aggregates()

    if not aggs:
        cols = [i for i in query.items if isinstance(i, str)]
        positions = [index[c] for c in cols]
        if query.group_by:
            keys = sorted({tuple(row[p] for p in positions) for row in data.rows})
            return QueryAnswer(list(cols), keys, "")
        rows = [tuple(row[p] for p in positions) for row in data.rows]
        return QueryAnswer(list(cols), rows, "")

    group_positions = [index[g] for g in query.group_by]
    groups: dict[tuple, list[int]] = {}
    for i, row in enumerate(data.rows):
        groups.setdefault(tuple(row[p] for p in group_positions), []).append(i)

    columns = list(query.group_by) + [a.label() for a in aggs]
    out_rows = []
    for key in sorted(groups):
        members = groups[key]
        w = data.weights[members]
        total = float(w.sum())
        if total <= 0:
            continue
        values = []
        for agg in aggs:
            if agg.func == "count":
                values.append(total)
                continue
            col = np.asarray([data.rows[i][index[agg.arg]] for i in members],
                             dtype=float)
            weighted_sum = float(np.dot(w, col))
            values.append(weighted_sum if agg.func == "sum" else weighted_sum / total)
        if not all(math.isfinite(v) for v in values):
            raise TypeMismatchError("non-finite aggregate value")
        out_rows.append(key + tuple(values))
    return QueryAnswer(columns, out_rows, "")


def _as_weighted(sample: SampleRelation, weights) -> WeightedRows:
    return WeightedRows(sample.schema, list(sample.rows), np.asarray(weights, dtype=float))


def _view(catalog: Catalog, pop_name: str, weighted: WeightedRows) -> WeightedRows:
    pop = catalog.population(pop_name)
    return weighted.filtered(pop.predicate)


# --- visibility levels -----------------------------------------------------------


def execute_closed(query: Select, sample: SampleRelation,
                   catalog: Catalog) -> QueryAnswer:
    """Samples as-is: unit weights, zero false positives."""
    weighted = _as_weighted(sample, np.ones(len(sample.rows)))
    answer = evaluate_aggregates(_view(catalog, query.source, weighted), query)
    answer.provenance = PROVENANCE_CLOSED
    return answer


def _mechanism_weights(sample: SampleRelation, catalog: Catalog) -> np.ndarray:
    mech = sample.mechanism
    n = len(sample.rows)
    if mech.kind == "uniform":
        return np.full(n, 100.0 / mech.percent)
    # Stratified: inclusion probability needs stratum sizes, which only a
    # 1-D marginal on the stratification attribute can supply.
    gp = catalog.global_population()
    marginal = next(
        (m for m in catalog.marginals_for(gp.name)
         if m.attributes == (mech.strat_attribute,)), None)
    if marginal is None:
        raise NoMetadataError(
            f"stratified mechanism on '{mech.strat_attribute}' requires a 1-D "
            "marginal on that attribute to recover stratum sizes")
    strata = {k: v for k, v in marginal.cells.items() if v > 0}
    k = len(strata)
    n_pop = marginal.total()
    index = sample.index()
    weights = np.empty(n)
    for i, row in enumerate(sample.rows):
        cell = marginal.cell_of(row, index)
        stratum = strata.get(cell)
        if stratum is None:
            raise NoMetadataError(
                f"sample tuple falls in stratum {cell!r} with no marginal mass")
        inclusion = (mech.percent / 100.0) * n_pop / (k * stratum)
        weights[i] = 1.0 / inclusion
    return weights


def execute_semi_open(query: Select, sample: SampleRelation, catalog: Catalog,
                      options: ExecOptions | None = None) -> QueryAnswer:
    """Reweighted sample: known mechanism inverts the inclusion probability,
    otherwise IPF against query-population or global marginals."""
    options = options or ExecOptions()
    pop = catalog.population(query.source)
    report: IpfReport | None = None

    if sample.mechanism is not None:
        weighted = _as_weighted(sample, _mechanism_weights(sample, catalog))
        weighted = _view(catalog, pop.name, weighted)
        provenance = PROVENANCE_MECHANISM
    elif not options.use_ipf:
        stored = sample.weights if len(sample.weights) else np.ones(len(sample.rows))
        weighted = _view(catalog, pop.name, _as_weighted(sample, stored))
        provenance = PROVENANCE_STORED
    else:
        direct = catalog.marginals_for(pop.name)
        if direct:
            # Restrict to the population view, then fit its marginals.
            base = _view(catalog, pop.name, _as_weighted(
                sample, sample.weights if len(sample.weights)
                else np.ones(len(sample.rows))))
            scoped = SampleRelation(sample.name, sample.schema, base.rows,
                                    base.weights)
            fitted, report = ipf_fit(scoped, direct, options.ipf)
            weighted = WeightedRows(sample.schema, base.rows, fitted)
            provenance = PROVENANCE_IPF_DIRECT
        else:
            gp = catalog.global_population()
            marginals = catalog.marginals_for(gp.name)
            if not marginals:
                raise UnknownMechanismNoMetadataError(
                    f"no marginals for '{pop.name}' or the global population")
            fitted, report = ipf_fit(sample, marginals, options.ipf)
            weighted = _view(catalog, pop.name,
                             WeightedRows(sample.schema, list(sample.rows), fitted))
            provenance = PROVENANCE_IPF_GLOBAL

    answer = evaluate_aggregates(weighted, query)
    answer.provenance = provenance
    if report is not None:
        answer.diagnostics["ipf"] = report
    return answer


def _trained_generator(sample: SampleRelation, marginals, options: ExecOptions,
                       log=None) -> TrainedGenerator:
    cfg = options.train_config or TrainConfig()
    key = fingerprint(sample, marginals, cfg)
    cached = options.generator_cache.get(key)
    if cached is None:
        cached = train(sample, marginals, cfg, log=log)
        options.generator_cache[key] = cached
    return cached


def execute_open(query: Select, sample: SampleRelation, catalog: Catalog,
                 options: ExecOptions | None = None, log=None) -> QueryAnswer:
    """Generator-backed answering: k generated samples, each uniformly
    weighted to the population total; the answer keeps the groups present
    in all k and averages their aggregate values."""
    options = options or ExecOptions()
    pop = catalog.population(query.source)
    marginals = catalog.marginals_for(pop.name)
    if not marginals:
        gp = catalog.global_population()
        marginals = catalog.marginals_for(gp.name)
    if not marginals:
        raise NoMetadataError(f"OPEN query over '{pop.name}' needs marginals")

    trained = _trained_generator(sample, marginals, options, log=log)
    n_generated = max(1, len(sample.rows))
    weight = trained.population_total / n_generated
    k = max(1, options.k_samples)

    aggs = query.aggregates()
    answers = []
    first_rows: QueryAnswer | None = None
    for _ in range(k):
        rows = generate(trained, n_generated, options.rng)
        weighted = WeightedRows(sample.schema, rows, np.full(len(rows), weight))
        weighted = _view(catalog, pop.name, weighted)
        answer = evaluate_aggregates(weighted, query)
        if not aggs:
            first_rows = answer
            break
        answers.append(answer)

    diagnostics = {
        "k": 1 if not aggs else k,
        "generated_rows": n_generated,
        "row_weight": weight,
        "materialized": not aggs,
        "generator_params": trained.net.num_params(),
    }
    if not aggs:
        first_rows.provenance = PROVENANCE_OPEN
        first_rows.diagnostics.update(diagnostics)
        return first_rows

    columns = list(query.group_by) + [a.label() for a in aggs]
    out_rows = intersect_group_answers(answers, len(query.group_by))
    return QueryAnswer(columns, out_rows, PROVENANCE_OPEN, diagnostics)


def intersect_group_answers(answers: list[QueryAnswer], n_group: int) -> list[tuple]:
    """Keep only group keys present in every answer; average their aggregates."""
    common = set(answers[0].group_keys(n_group))
    for answer in answers[1:]:
        common &= answer.group_keys(n_group)
    sums: dict[tuple, np.ndarray] = {}
    for answer in answers:
        for row in answer.rows:
            key = row[:n_group]
            if key in common:
                values = np.asarray(row[n_group:], dtype=float)
                sums[key] = sums.get(key, 0.0) + values
    k = len(answers)
    return [key + tuple(float(v) / k for v in sums[key]) for key in sorted(sums)]


def execute(query: Select, catalog: Catalog,
            options: ExecOptions | None = None, log=None) -> QueryAnswer:
    """Plan and run a query at its declared visibility."""
    options = options or ExecOptions()
    chosen = plan(query, catalog)
    sample = catalog.sample(chosen.sample_name)
    if query.visibility == Visibility.CLOSED:
        answer = execute_closed(query, sample, catalog)
    elif query.visibility == Visibility.SEMI_OPEN:
        answer = execute_semi_open(query, sample, catalog, options)
    else:
        answer = execute_open(query, sample, catalog, options, log=log)
    answer.diagnostics.setdefault("sample", chosen.sample_name)
    if chosen.metadata_path is not None:
        answer.diagnostics.setdefault("metadata_path", chosen.metadata_path)
    return answer
