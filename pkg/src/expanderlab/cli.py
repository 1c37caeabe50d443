"""Command-line driver: every subcommand writes a CSV table and prints a summary.

Exit codes: 0 success, 2 invalid input, 3 infeasible design or layout.
"""
from __future__ import annotations

import configparser
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import (CapacityExceeded, ExpanderLabError, Infeasible, LayoutInfeasible, NoPath,
                     ValidationError)
from .randomness import child_seed

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE = 0, 2, 3

DEFAULTS = {"n": 1000, "d": 64, "p": 4, "h": 2, "key": 1}


# ------------------------------------------------------------ plumbing

def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` comments and an optional ``[section]`` header are allowed."""
    text = Path(path).read_text()
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
    parser.optionxform = str
    if not text.lstrip().startswith("["):
        text = "[run]\n" + text
    parser.read_string(text)
    out = {}
    for section in parser.sections():
        out.update(parser[section])
    return out


def write_config(params: dict, path) -> None:
    Path(path).write_text("".join(f"{k} = {v}\n" for k, v in sorted(params.items())))


def _apply_config(ctx: click.Context) -> None:
    """Fill options left at their defaults from the ``--config`` file."""
    cfg_path = ctx.params.get("config")
    if not cfg_path:
        return
    values = read_config(cfg_path)
    known = {p.name: p for p in ctx.command.params}
    bad = sorted(k for k in values if k.replace("-", "_") not in known)
    if bad:
        raise ValidationError(f"unknown config fields: {', '.join(bad)}")
    for key, raw in values.items():
        name = key.replace("-", "_")
        source = ctx.get_parameter_source(name)
        if source is not None and source.name != "DEFAULT":
            continue  # flags win over the file
        try:
            ctx.params[name] = known[name].type_cast_value(ctx, raw)
        except click.BadParameter as exc:
            raise ValidationError(f"config field {key}: {exc.message}") from exc


def _header(command: str, params: dict) -> str:
    lines = [f"# expanderlab {__version__} {command}"]
    seed = params.get("seed")
    lines.append(f"# seed = {seed}")
    for k in sorted(params):
        if k in ("config", "out", "seed"):
            continue
        lines.append(f"# {k} = {params[k]}")
    return "\n".join(lines) + "\n"


def emit(command: str, params: dict, columns: list[str], rows: list, out: str | None) -> None:
    """Write (or print) a CSV table led by the full parameter record."""
    buf = io.StringIO()
    buf.write(_header(command, params))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(buf.getvalue())
    else:
        click.echo(buf.getvalue(), nl=False)


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return x


def summary(msg: str) -> None:
    click.echo(msg, err=True)


class Command(click.Command):
    """Runs config merging and maps package errors to exit codes."""

    def invoke(self, ctx):
        try:
            _apply_config(ctx)
            return super().invoke(ctx)
        except (Infeasible, LayoutInfeasible, CapacityExceeded) as exc:
            summary(f"infeasible: {exc}")
            ctx.exit(EXIT_INFEASIBLE)
        except (ValidationError, NoPath, ValueError) as exc:
            summary(f"invalid input: {exc}")
            ctx.exit(EXIT_INVALID)
        except ExpanderLabError as exc:
            summary(f"error: {exc}")
            ctx.exit(EXIT_INVALID)


def common(f):
    f = click.option("--config", type=click.Path(exists=True, dir_okay=False), default=None,
                     help="key = value file; explicit flags override it")(f)
    f = click.option("--out", type=click.Path(dir_okay=False), default=None, help="CSV output path")(f)
    return f


def seeded(f):
    return click.option("--seed", type=int, default=None, help="required for every stochastic run")(f)


def fabric(f):
    for name in ("key", "h", "p", "d", "n"):
        f = click.option(f"--{name}", type=int, default=DEFAULTS[name], show_default=True)(f)
    return f


def _need_seed(seed):
    if seed is None:
        raise ValidationError("this subcommand is stochastic: pass --seed")
    return seed


def _topology(n, d, seed, topology_file=None):
    from .graph_core import build_configuration_graph, load_topology
    if topology_file:
        return load_topology(topology_file)
    return build_configuration_graph(n, d, child_seed(seed, "topology"))


@click.group()
@click.version_option(__version__)
def main():
    """Expander fabric experiments: topology, routing, flow, cabling, latency and cost."""


# ------------------------------------------------------------ build / levels / paths

@main.command(cls=Command)
@click.option("--n", type=int, default=DEFAULTS["n"], show_default=True)
@click.option("--d", type=int, default=DEFAULTS["d"], show_default=True)
@click.option("--multigraph", is_flag=True, help="keep self-loops and parallel edges")
@click.option("--topology", "topology_out", type=click.Path(dir_okay=False), default=None,
              help="also save the edge list here")
@seeded
@common
def build(n, d, multigraph, topology_out, seed, out, config):
    """Random regular topology; CSV is the degree histogram."""
    from .graph_core import build_configuration_graph, save_topology, spectral_gap
    topo = build_configuration_graph(n, d, _need_seed(seed), simple=not multigraph)
    if topology_out:
        save_topology(topo, topology_out)
    deg, cnt = np.unique(topo.degrees, return_counts=True)
    emit("build", dict(n=n, d=d, multigraph=multigraph, seed=seed), ["degree", "count"],
         list(zip(deg.tolist(), cnt.tolist())), out)
    lam = spectral_gap(topo) if topo.is_connected() else float("nan")
    summary(f"edges={topo.num_edges} self_loops={topo.self_loop_count()} second_eigenvalue={lam:.4f}")


@main.command(cls=Command)
@fabric
@click.option("--ell", type=int, default=None)
@click.option("--dest", type=int, default=0, show_default=True)
@click.option("--topology", "topology_file", type=click.Path(exists=True, dir_okay=False), default=None)
@seeded
@common
def levels(n, d, p, h, key, ell, dest, topology_file, seed, out, config):
    """Waypoint levels and parents for one destination."""
    from .spraypoint import build_pointing_graph, compute_levels, default_level_count
    topo = _topology(n, d, _need_seed(seed), topology_file)
    ell = ell or default_level_count(topo.n, topo.d, p)
    lv = compute_levels(topo, dest, p, ell, key)
    pg = build_pointing_graph(topo, lv, h, key)
    rows = [(u, lv.tag(u), int(pg.hops[u]), " ".join(map(str, pg.parents_of(u)))) for u in range(topo.n)]
    emit("levels", dict(n=topo.n, d=topo.d, p=p, h=h, key=key, ell=ell, dest=dest, seed=seed),
         ["node", "tag", "hops", "parents"], rows, out)
    sizes = {lv.tag(u): 0 for u in range(topo.n)}
    for u in range(topo.n):
        sizes[lv.tag(u)] += 1
    summary(" ".join(f"{k}={v}" for k, v in sorted(sizes.items())))


@main.command(cls=Command)
@fabric
@click.option("--pairs", type=int, default=100000, show_default=True, help="sampled walks")
@seeded
@common
def paths(n, d, p, h, key, pairs, seed, out, config):
    """Path-length histogram against the closed-form prediction."""
    from .models import model_path_length
    from .spraypoint import path_length_distribution
    seed = _need_seed(seed)
    topo = _topology(n, d, seed)
    sim = path_length_distribution(topo, p, h, None, key, pairs, child_seed(seed, "walks"))
    model = model_path_length(n, d, p)
    lengths = sorted(set(sim) | set(model))
    emit("paths", dict(n=n, d=d, p=p, h=h, key=key, pairs=pairs, seed=seed), ["length", "simulated", "model"],
         [(i, sim.get(i, 0.0), model.get(i, 0.0)) for i in lengths], out)
    mean = sum(i * x for i, x in sim.items())
    summary(f"mean_length={mean:.4f}")


@main.command(cls=Command)
@fabric
@click.option("--pairs", type=int, default=200, show_default=True)
@seeded
@common
def mincut(n, d, p, h, key, pairs, seed, out, config):
    """Edge-disjoint Spraypoint paths per sampled pair."""
    from .flow_analysis import SpraypointPaths, pair_edge_disjoint, sample_pairs
    from .models import model_edge_disjoint
    seed = _need_seed(seed)
    topo = _topology(n, d, seed)
    prov = SpraypointPaths(topo, p, h, key)
    rows = []
    for s, t in sample_pairs(topo.n, pairs, child_seed(seed, "mincut")):
        nbr = bool(np.isin(t, topo.neighbors(s)))
        rows.append((s, t, pair_edge_disjoint(topo, prov, s, t), int(nbr), model_edge_disjoint(d, p, h, nbr)))
    emit("mincut", dict(n=n, d=d, p=p, h=h, key=key, pairs=pairs, seed=seed),
         ["src", "dst", "edp", "neighbors", "model"], rows, out)
    edp = np.array([r[2] for r in rows])
    summary(f"median_edp={np.median(edp):.1f} min_edp={edp.min()} share_ge_50={np.mean(edp >= 50):.3f}")


# ------------------------------------------------------------ flow

def _oversub_point(args):
    n, d, p, h, key, matchings, eps, seed = args
    from .flow_analysis import oversubscription
    from .models import model_oversub
    topo = _topology(n, d, seed)
    rep = oversubscription(topo, p, h, key, matchings, eps, child_seed(seed, "matchings"))
    try:
        model = model_oversub(n, d, p, h).oversub
    except ExpanderLabError:
        model = float("nan")
    return rep, model


SWEEP_AXES = {"d": (32, 48, 64, 96), "p": (2, 4, 8, 16), "h": (1, 2, 3), "n": (500, 1000)}


@main.command(cls=Command)
@fabric
@click.option("--matchings", type=int, default=20, show_default=True)
@click.option("--eps", type=float, default=0.05, show_default=True)
@click.option("--sweep", is_flag=True, help="one-at-a-time grid around the given point")
@click.option("--jobs", type=int, default=1, show_default=True)
@seeded
@common
def oversub(n, d, p, h, key, matchings, eps, sweep, jobs, seed, out, config):
    """Worst-case oversubscription under random full matchings."""
    seed = _need_seed(seed)
    params = dict(n=n, d=d, p=p, h=h, key=key, matchings=matchings, eps=eps, sweep=sweep, seed=seed)
    if not sweep:
        rep, model = _oversub_point((n, d, p, h, key, matchings, eps, seed))
        emit("oversub", params, ["matching", "r"], list(enumerate(rep.values)), out)
        summary(f"worst_r={rep.worst:.4f} spread={rep.spread:.4f} model={model:.4f}")
        return
    base = dict(n=n, d=d, p=p, h=h)
    grid = []
    for axis, values in SWEEP_AXES.items():
        for v in values:
            point = dict(base, **{axis: v})
            grid.append((axis, v, point))
    tasks = [(g["n"], g["d"], g["p"], g["h"], key, matchings, eps, child_seed(seed, "grid", i))
             for i, (_, _, g) in enumerate(grid)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_oversub_point, tasks))  # map keeps grid order
    else:
        results = [_oversub_point(t) for t in tasks]
    rows = [(axis, v, g["n"], g["d"], g["p"], g["h"], rep.worst, model)
            for (axis, v, g), (rep, model) in zip(grid, results)]
    emit("oversub", params, ["axis", "value", "n", "d", "p", "h", "simulated", "model"], rows, out)
    err = [abs(m - r.worst) / r.worst for r, m in results if np.isfinite(m)]
    summary(f"points={len(rows)} within_15pct={np.mean(np.array(err) <= 0.15):.3f}")


@main.command(cls=Command)
@fabric
@click.option("--pattern", type=click.Choice(["matching", "clique", "hubs"]), default="matching")
@click.option("--fractions", default="0.1,0.25,0.5,1.0", show_default=True, help="active node fractions")
@click.option("--eps", type=float, default=0.05, show_default=True)
@seeded
@common
def traffic(n, d, p, h, key, pattern, fractions, eps, seed, out, config):
    """Oversubscription for one traffic pattern across active fractions."""
    from .flow_analysis import SpraypointPaths, generate_traffic, max_concurrent_flow
    seed = _need_seed(seed)
    topo = _topology(n, d, seed)
    prov = SpraypointPaths(topo, p, h, key)
    fr = [float(x) for x in fractions.split(",") if x.strip()]
    rows = []
    for i, f in enumerate(fr):
        matrix = generate_traffic(pattern, f, n, child_seed(seed, "traffic", i))
        res = max_concurrent_flow(topo, prov, matrix, eps=eps)
        rows.append((pattern, f, len(matrix), res.r, res.r_lower))
    emit("traffic", dict(n=n, d=d, p=p, h=h, key=key, pattern=pattern, fractions=fractions, eps=eps, seed=seed),
         ["pattern", "fraction", "demands", "r", "r_lower"], rows, out)
    summary(f"worst_r={max(r[3] for r in rows):.4f}")


@main.command(cls=Command)
@fabric
@common
def models(n, d, p, h, key, out, config):
    """Closed-form predictions with every intermediate value."""
    from dataclasses import asdict

    from .models import model_edge_disjoint, model_oversub, model_path_length
    rows = []
    try:
        br = model_oversub(n, d, p, h)
        rows += [("oversub", k, v) for k, v in asdict(br).items()]
    except ExpanderLabError as exc:
        summary(f"oversub model: {exc}")
        br = None
    rows += [("path_length", i, x) for i, x in model_path_length(n, d, p).items()]
    rows += [("edge_disjoint", "non_neighbor", model_edge_disjoint(d, p, h, False)),
             ("edge_disjoint", "neighbor", model_edge_disjoint(d, p, h, True))]
    emit("models", dict(n=n, d=d, p=p, h=h), ["model", "quantity", "value"], rows, out)
    if br is not None:
        summary(f"oversub={br.oversub:.4f} " + " ".join(f"{k}={getattr(br, k):.4g}" for k in ("mu2", "mu3", "mu4", "mu5")))


# ------------------------------------------------------------ cabling / latency

@main.command(cls=Command)
@click.option("--rooms", type=int, default=10, show_default=True)
@click.option("--routers-per-room", type=int, default=100, show_default=True)
@click.option("--uplinks", type=int, default=64, show_default=True)
@click.option("--alpha", type=float, default=1.0, show_default=True)
@click.option("--batch", type=int, default=5, show_default=True)
@click.option("--phases", default=None, help="first-room phase fractions, e.g. 0.3,0.7")
@click.option("--plan", "plan_out", type=click.Path(dir_okay=False), default=None, help="save the final plan")
@seeded
@common
def cabling(rooms, routers_per_room, uplinks, alpha, batch, phases, plan_out, seed, out, config):
    """Landing timeline (matched uplinks vs the degree model) and final resolution."""
    from .cabling import (LandEvent, deployment_timeline, land_routers, plan_datacenter, resolve_topology,
                          save_plan, standard_schedule)
    seed = _need_seed(seed)
    ph = tuple(float(x) for x in phases.split(",")) if phases else None
    sched = standard_schedule(rooms, routers_per_room, uplinks, batch=batch, phases=ph)
    tl = deployment_timeline(sched, child_seed(seed, "timeline"), alpha=alpha)
    rows = list(zip(tl.routers.tolist(), tl.fraction.tolist(), tl.matched.tolist(), tl.model.tolist()))
    emit("cabling", dict(rooms=rooms, routers_per_room=routers_per_room, uplinks=uplinks, alpha=alpha,
                         batch=batch, phases=phases, seed=seed),
         ["routers", "fraction", "matched", "model"], rows, out)
    boxes = next(e.boxes for e in sched if not isinstance(e, LandEvent))
    plan = plan_datacenter(rooms, boxes, alpha=alpha, seed=child_seed(seed, "plan"))
    for r in range(rooms):
        land_routers(plan, r, routers_per_room, uplinks, child_seed(seed, "land", r))
    res = resolve_topology(plan)
    if plan_out:
        save_plan(plan, plan_out)
    pats = res.edge_pattern
    summary(f"max_model_gap={tl.max_model_gap():.4f} unmatched={res.unmatched_fraction:.4f} "
            f"disabled={len(res.disabled)} trunks={plan.trunk_count()} "
            f"pattern_a={int(np.sum(pats == 'a'))} pattern_b={int(np.sum(pats == 'b'))} "
            f"pattern_c={int(np.sum(pats == 'c'))}")


@main.command(cls=Command)
@click.option("--routers-per-room", type=int, default=100, show_default=True)
@click.option("--uplinks", type=int, default=64, show_default=True)
@click.option("--rooms", type=int, default=10, show_default=True)
@click.option("--span", type=float, default=300.0, show_default=True)
@click.option("--room-depth", type=float, default=165.0, show_default=True)
@click.option("--cable-drop", type=float, default=3.0, show_default=True)
@click.option("--switch-ns", type=float, default=0.0, show_default=True)
@click.option("--transmission-ns", type=float, default=700.0, show_default=True)
@click.option("--p", type=int, default=4, show_default=True)
@click.option("--h", type=int, default=2, show_default=True)
@click.option("--key", type=int, default=1, show_default=True)
@click.option("--pairs", type=int, default=2000, show_default=True)
@seeded
@common
def latency(routers_per_room, uplinks, rooms, span, room_depth, cable_drop, switch_ns, transmission_ns,
            p, h, key, pairs, seed, out, config):
    """Latency percentiles: fat tree, baseline, biased levels, biased levels plus biased cabling."""
    from .latency import (Geometry, LatencyParams, fat_tree_latency_baseline, latency_distribution,
                          layout_plan)
    seed = _need_seed(seed)
    geo = Geometry(span=span, rooms=rooms, room_depth=room_depth, cable_drop=cable_drop)
    prm = LatencyParams(per_hop_switch=switch_ns, transmission=transmission_ns)
    full = layout_plan(geo, routers_per_room, uplinks, 1.0, child_seed(seed, "plan"))
    half = layout_plan(geo, routers_per_room, uplinks, 0.5, child_seed(seed, "plan"))
    ps = child_seed(seed, "pairs")
    tables = [fat_tree_latency_baseline(rooms * routers_per_room, geo, prm, pairs, ps),
              latency_distribution(full, geo, prm, pairs, ps, p, h, key, label="baseline"),
              latency_distribution(full, geo, prm, pairs, ps, p, h, key, biased=True, label="biased-levels"),
              latency_distribution(half, geo, prm, pairs, ps, p, h, key, biased=True,
                                   label="biased-levels-alpha-0.5")]
    params = dict(routers_per_room=routers_per_room, uplinks=uplinks, rooms=rooms, span=span,
                  room_depth=room_depth, cable_drop=cable_drop, switch_ns=switch_ns,
                  transmission_ns=transmission_ns, p=p, h=h, key=key, pairs=pairs, seed=seed)
    emit("latency", params, ["label", "p10_ns", "p50_ns", "p90_ns", "mean_ns"],
         [(t.label, t.p10, t.p50, t.p90, t.mean) for t in tables], out)
    summary(f"baseline_over_fat_tree={tables[1].p50 / tables[0].p50:.4f} "
            f"trunks_alpha1={full.trunk_count()} trunks_alpha05={half.trunk_count()}")


# ------------------------------------------------------------ design / cost

@main.command(cls=Command)
@click.option("--servers", type=int, default=61440, show_default=True)
@click.option("--ports", type=int, default=128, show_default=True)
@click.option("--re", "r_e", type=float, default=3.0, show_default=True)
@click.option("--rt", "r_t", type=float, default=1.0, show_default=True)
@click.option("--ecmp-mem", type=int, default=16000, show_default=True)
@click.option("--regime", type=click.Choice(["strict", "loose"]), default="strict", show_default=True)
@common
def design(servers, ports, r_e, r_t, ecmp_mem, regime, out, config):
    """Smallest fabric meeting the oversubscription targets, with its audit trail."""
    from .fabric_designer import design_fabric
    spec = design_fabric(servers, ports, r_e, r_t, ecmp_mem, regime=regime)
    rows = [("d", spec.d), ("n", spec.n), ("h", spec.h), ("p", spec.p),
            ("mesh_target", spec.mesh_target), ("predicted_mesh_oversub", spec.predicted_mesh_oversub)]
    emit("design", dict(servers=servers, ports=ports, re=r_e, rt=r_t, ecmp_mem=ecmp_mem, regime=regime),
         ["field", "value"], rows, out)
    summary(spec.as_text().rstrip())


@main.command(cls=Command)
@click.option("--ports", default="32,128", show_default=True)
@click.option("--oversubs", default="1,2,3,5", show_default=True)
@click.option("--ecmp-mem", type=int, default=16000, show_default=True)
@click.option("--regime", type=click.Choice(["strict", "loose"]), default="strict", show_default=True)
@common
def compare(ports, oversubs, ecmp_mem, regime, out, config):
    """Switch-count reduction against 3-tier fat trees at full, half and quarter scale."""
    from .fabric_designer import cost_curve
    rows = []
    for P in (int(x) for x in ports.split(",")):
        rows += cost_curve(P, tuple(float(x) for x in oversubs.split(",")), ecmp_mem=ecmp_mem, regime=regime)
    cols = ["ports", "servers", "oversub", "fat_tree", "tor", "agg", "spine", "mesh_tors", "d", "h", "p",
            "reduction_pct"]
    emit("compare", dict(ports=ports, oversubs=oversubs, ecmp_mem=ecmp_mem, regime=regime), cols,
         [[r[c] for c in cols] for r in rows], out)
    red = [r["reduction_pct"] for r in rows]
    summary(f"reduction_min={min(red):.1f} reduction_max={max(red):.1f}")


if __name__ == "__main__":
    sys.exit(main())
