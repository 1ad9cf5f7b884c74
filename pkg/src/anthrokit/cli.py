"""Command-line entry point.

Every subcommand reads/writes the documented file formats (docs/format.md),
funnels randomness through an explicit ``--seed``, and is idempotent given
identical inputs; ``--deterministic`` suppresses the timestamp fields so runs
are byte-comparable. Domain errors exit 1 with a JSON object
``{code, message, context}`` on stderr; usage errors exit 2.
"""

from __future__ import annotations

import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import (
    DimensionMismatchError,
    FormatError,
    InvalidValueError,
    ToolkitError,
)
from .curation import (
    DEFAULT_BIN_CAP,
    DEFAULT_BIN_HEIGHT_M,
    DEFAULT_BIN_WEIGHT_KG,
    DEFAULT_TAU,
    SubjectRecord,
    balance_sample,
    bmi_weighted_pick,
    load_embeddings,
    match_identities,
)
from .fitting import (
    DEFAULT_MAX_ITERS,
    DEFAULT_TOL,
    DEFAULT_WEIGHTS,
    FitConfig,
    FitTargets,
    fit_shape,
)
from .fixture import capsule_person, write_fixture
from .mappers import (
    DEFAULT_RIDGE,
    fit_mapper as fit_mapper_op,
    apply_mapper,
    load_mapper,
    save_mapper,
    variant_input_rows,
    variant_output_kind,
    variant_spec,
)
from .measurements import (
    MEAN_BODY_DENSITY,
    MeasurementSet,
    measure,
    measure_gradients,
)
from .meshio import load_mesh
from .metrics import (
    DEFAULT_POINTS,
    build_point_regressor,
    measurement_mae,
    p2p_error,
    topology_hash,
    v2v_error,
)
from .model import BodyModel, LandmarkSet, load_model, shaped_vertices
from .tables import (
    fmt_float,
    read_betas_csv,
    read_subject_table,
    write_csv,
    write_measurements_csv,
)

pass_state = click.make_pass_decorator(dict, ensure=True)


def _apply_config(ctx: click.Context, subcommand: str) -> None:
    """Fill parameters from the run-config file unless set on the CLI."""
    state = ctx.ensure_object(dict)
    cfg = state.get("config", {}) or {}
    sub = cfg.get(subcommand, {})
    for name, value in sub.items():
        if name not in ctx.params:
            raise FormatError(f"config key '{subcommand}.{name}' is not a parameter")
        if ctx.get_parameter_source(name) == click.core.ParameterSource.DEFAULT:
            ctx.params[name] = value


def _emit(state: dict, payload: dict) -> None:
    if not state.get("deterministic"):
        payload = {**payload, "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    click.echo(json.dumps(payload, sort_keys=True))


def _load_model_arg(path: str) -> BodyModel:
    if path == "fixture":
        return capsule_person()
    return load_model(path)


@click.group(name="anthrokit")
@click.version_option(__version__)
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="JSON run-config; CLI flags override file values.")
@click.option("--deterministic", is_flag=True,
              help="Suppress timestamps so outputs are byte-comparable.")
@click.pass_context
def cli(ctx, config_path, deterministic):
    """Body-shape measurement, mapping, fitting, and evaluation toolkit."""
    state = ctx.ensure_object(dict)
    state["deterministic"] = deterministic
    state["config"] = {}
    if config_path:
        try:
            state["config"] = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"run config is not valid JSON: {exc}", path=config_path)


# ---------------------------------------------------------------------------


@cli.command()
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False))
@click.option("--subjects", default=120, show_default=True, type=int)
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--segments", default=32, show_default=True, type=int)
@click.option("--rings", default=58, show_default=True, type=int)
@click.pass_context
def fixture(ctx, outdir, subjects, seed, segments, rings):
    """Generate the capsule-person model archive and synthetic population."""
    _apply_config(ctx, "fixture")
    p = ctx.params
    summary = write_fixture(p["outdir"], subjects=p["subjects"], seed=p["seed"],
                            segments=p["segments"], rings=p["rings"])
    _emit(ctx.obj, summary)


@cli.command(name="measure")
@click.option("--model", "model_path", default=None,
              help="Model archive path, or 'fixture' for the built-in model.")
@click.option("--betas", "betas_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="CSV with beta_* columns, one row per subject.")
@click.option("--mesh", "mesh_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="OBJ/PLY mesh to measure directly.")
@click.option("--landmarks", "landmarks_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="JSON with head_top/left_heel/chest/waist/hip vertex indices (mesh mode).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--gradients", "gradients_path", default=None, type=click.Path(dir_okay=False),
              help="Also write d(measurement)/d(beta) rows to this CSV (model mode).")
@click.option("--density", default=MEAN_BODY_DENSITY, show_default=True, type=float)
@click.option("--torso-only", is_flag=True,
              help="Restrict circumference slices to the loop nearest the landmark.")
@click.option("--jobs", default=1, show_default=True, type=int)
@click.pass_context
def measure_cmd(ctx, **_kw):
    """Compute height/weight/circumferences; one CSV row per subject."""
    _apply_config(ctx, "measure")
    p = ctx.params
    if p["mesh_path"]:
        mesh = load_mesh(p["mesh_path"])
        if not p["landmarks_path"]:
            raise InvalidValueError("mesh mode needs --landmarks")
        lm_raw = json.loads(Path(p["landmarks_path"]).read_text())
        lm = LandmarkSet(**{k: int(lm_raw[k]) for k in
                            ("head_top", "left_heel", "chest", "waist", "hip")})
        lm.validate(mesh)
        from .measurements import circumference, height, weight

        row = MeasurementSet(
            height=height(mesh, lm),
            weight=weight(mesh, p["density"]),
            chest_circ=circumference(mesh, lm.chest, p["torso_only"]),
            waist_circ=circumference(mesh, lm.waist, p["torso_only"]),
            hip_circ=circumference(mesh, lm.hip, p["torso_only"]),
        ).validate()
        write_measurements_csv(p["out_path"], [Path(p["mesh_path"]).stem],
                               row.as_array()[None, :])
        _emit(ctx.obj, {"rows": 1, "out": p["out_path"]})
        return

    if not p["model_path"] or not p["betas_path"]:
        raise InvalidValueError("model mode needs --model and --betas")
    model = _load_model_arg(p["model_path"])
    ids, betas = read_betas_csv(p["betas_path"])
    if betas.shape[1] != model.num_betas:
        raise DimensionMismatchError(
            f"betas CSV has {betas.shape[1]} columns, model expects {model.num_betas}"
        )

    def run_row(i):
        return measure(model, betas[i], density=p["density"],
                       torso_only=p["torso_only"]).as_array()

    if not ids:
        rows = np.zeros((0, 5))
    elif p["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=p["jobs"]) as pool:
            rows = np.stack(list(pool.map(run_row, range(len(ids)))))
    else:
        rows = np.stack([run_row(i) for i in range(len(ids))])
    write_measurements_csv(p["out_path"], ids, rows)

    if p["gradients_path"]:
        header = ["subject_id", "field", "non_smooth"] + \
                 [f"d_beta_{k}" for k in range(model.num_betas)]
        out_rows = []
        for i in range(len(ids)):
            g = measure_gradients(model, betas[i], density=p["density"])
            for fieldname, vec in (("height", g.height), ("weight", g.weight),
                                   ("chest_circ", g.chest_circ),
                                   ("waist_circ", g.waist_circ),
                                   ("hip_circ", g.hip_circ)):
                flag = g.non_smooth.get(fieldname, False)
                out_rows.append([ids[i], fieldname, int(flag),
                                 *(fmt_float(v) for v in vec)])
        write_csv(p["gradients_path"], header, out_rows)
    _emit(ctx.obj, {"rows": len(ids), "out": p["out_path"]})


@cli.command(name="fit-mapper")
@click.option("--train", "train_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--variant", required=True,
              help="A2S, S2A, H2S, HW2S, C2S, HC2S, HWC2S, or any A-prefixed form.")
@click.option("--gender", default=None, help="Train on this gender's rows only.")
@click.option("--degree", default=2, show_default=True, type=click.IntRange(1, 2))
@click.option("--ridge", default=DEFAULT_RIDGE, show_default=True, type=float)
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False))
@click.pass_context
def fit_mapper_cmd(ctx, **_kw):
    """Fit a polynomial mapper on a subject table CSV."""
    _apply_config(ctx, "fit-mapper")
    p = ctx.params
    table = read_subject_table(p["train_path"])
    keep = np.ones(len(table), dtype=bool)
    if p["gender"]:
        keep = table.gender_rows(p["gender"])
        if not keep.any():
            raise InvalidValueError(f"no rows with gender '{p['gender']}'")
    attrs = table.attributes[keep] if table.attributes is not None else None
    betas = table.betas[keep] if table.betas is not None else None
    meas = table.measurements[keep] if table.measurements is not None else None

    spec = variant_spec(p["variant"],
                        attribute_count=0 if attrs is None else attrs.shape[1],
                        beta_count=0 if betas is None else betas.shape[1],
                        degree=p["degree"])
    inputs = variant_input_rows(spec, meas, attrs, betas)
    kind = variant_output_kind(p["variant"])
    targets = attrs if kind == "attribute_scores" else betas
    if targets is None:
        raise InvalidValueError(f"training table lacks target columns for {p['variant']}")

    gender = p["gender"] or (table.genders[0] if table.genders else "neutral")
    mapper = fit_mapper_op(inputs, targets, spec, ridge=p["ridge"], output_kind=kind,
                           gender=gender, attribute_names=tuple(table.attribute_names))
    save_mapper(mapper, p["outdir"])
    resid = apply_mapper(mapper, inputs) - targets
    _emit(ctx.obj, {
        "variant": p["variant"], "out": p["outdir"], "rows": int(keep.sum()),
        "features": mapper.spec.num_poly_features,
        "train_rmse": float(np.sqrt(np.mean(resid ** 2))),
    })


@cli.command()
@click.option("--mapper", "mapper_path", required=True, type=click.Path(exists=True))
@click.option("--input", "input_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def predict(ctx, **_kw):
    """Apply a fitted mapper to a subject table."""
    _apply_config(ctx, "predict")
    p = ctx.params
    mapper = load_mapper(p["mapper_path"])
    table = read_subject_table(p["input_path"])
    raw = variant_input_rows(mapper.spec, table.measurements, table.attributes, table.betas)
    pred = apply_mapper(mapper, raw)
    if mapper.output_kind == "attribute_scores":
        pred = np.clip(pred, 1.0, 5.0)
        names = mapper.attribute_names or tuple(f"a{i}" for i in range(pred.shape[1]))
        header = ["subject_id"] + [f"attr_{n}" for n in names]
    else:
        header = ["subject_id"] + [f"beta_{i}" for i in range(pred.shape[1])]
    write_csv(p["out_path"], header,
              ([table.ids[i], *(fmt_float(v) for v in pred[i])] for i in range(len(table))))
    _emit(ctx.obj, {"rows": len(table), "out": p["out_path"]})


@cli.command(name="fit-shape")
@click.option("--model", "model_path", required=True)
@click.option("--targets", "targets_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mappers", "mappers_dir", default=None, type=click.Path(file_okay=False),
              help="Directory of mapper subdirectories (AHC2S/, S2A/, ...) for init and "
                   "attribute prediction.")
@click.option("--use", "use_terms", default="attributes,height,circumference",
              show_default=True, help="Comma list of target families to use when present.")
@click.option("--w-attributes", default=DEFAULT_WEIGHTS["attributes"], show_default=True,
              type=float)
@click.option("--w-height", default=DEFAULT_WEIGHTS["height"], show_default=True, type=float)
@click.option("--w-circumference", default=DEFAULT_WEIGHTS["circumference"], show_default=True,
              type=float)
@click.option("--w-regularizer", default=DEFAULT_WEIGHTS["regularizer"], show_default=True,
              type=float)
@click.option("--max-iters", default=DEFAULT_MAX_ITERS, show_default=True, type=int)
@click.option("--tol", default=DEFAULT_TOL, show_default=True, type=float)
@click.option("--step-rule", default="gauss_newton", show_default=True,
              type=click.Choice(["gauss_newton", "gradient", "adam"]))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--report", "report_path", default=None, type=click.Path(dir_okay=False))
@click.option("--jobs", default=1, show_default=True, type=int)
@click.pass_context
def fit_shape_cmd(ctx, **_kw):
    """Fit shape coefficients to measurement/attribute targets per subject."""
    _apply_config(ctx, "fit-shape")
    p = ctx.params
    model = _load_model_arg(p["model_path"])
    table = read_subject_table(p["targets_path"])
    use = {t.strip() for t in p["use_terms"].split(",") if t.strip()}
    unknown = use - {"attributes", "height", "circumference"}
    if unknown:
        raise InvalidValueError(f"unknown target families: {sorted(unknown)}")

    mappers = {}
    if p["mappers_dir"]:
        for sub in sorted(Path(p["mappers_dir"]).iterdir()):
            if (sub / "mapper.json").is_file():
                mappers[sub.name] = load_mapper(sub)

    config = FitConfig(max_iters=p["max_iters"], tol=p["tol"], step_rule=p["step_rule"])

    def run_row(i):
        meas = table.measurements[i] if table.measurements is not None else None
        attrs = None
        if "attributes" in use and table.attributes is not None:
            attrs = table.attributes[i]
        kwargs = dict(
            attributes=attrs,
            w_attributes=p["w_attributes"], w_height=p["w_height"],
            w_circumference=p["w_circumference"], w_regularizer=p["w_regularizer"],
        )
        if meas is not None and "height" in use and np.isfinite(meas[0]):
            kwargs["height"] = float(meas[0])
        if meas is not None and "circumference" in use:
            for name, col in (("chest", 2), ("waist", 3), ("hip", 4)):
                if np.isfinite(meas[col]):
                    kwargs[name] = float(meas[col])
        targets = FitTargets(**kwargs)
        return fit_shape(model, mappers, targets, config)

    if p["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=p["jobs"]) as pool:
            results = list(pool.map(run_row, range(len(table))))
    else:
        results = [run_row(i) for i in range(len(table))]

    header = ["subject_id"] + [f"beta_{i}" for i in range(model.num_betas)]
    write_csv(p["out_path"], header,
              ([table.ids[i], *(fmt_float(v) for v in results[i].beta)]
               for i in range(len(table))))
    if p["report_path"]:
        header = ["subject_id", "loss", "attributes", "height", "circumference",
                  "regularizer", "iterations", "converged", "non_smooth"]
        rows = []
        for i, r in enumerate(results):
            rows.append([table.ids[i], fmt_float(r.loss),
                         fmt_float(r.breakdown["attributes"]),
                         fmt_float(r.breakdown["height"]),
                         fmt_float(r.breakdown["circumference"]),
                         fmt_float(r.breakdown["regularizer"]),
                         r.iterations, int(r.converged), r.non_smooth_encounters])
        write_csv(p["report_path"], header, rows)
    _emit(ctx.obj, {
        "rows": len(table), "out": p["out_path"],
        "converged": sum(1 for r in results if r.converged),
        "mean_loss": float(np.mean([r.loss for r in results])),
    })


@cli.command(name="eval")
@click.option("--model", "model_path", default=None)
@click.option("--pred", "pred_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Predicted betas CSV (with --model) or mesh list file.")
@click.option("--gt", "gt_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--pred-meshes", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Text file with one OBJ/PLY path per line.")
@click.option("--gt-meshes", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--points", "num_points", default=DEFAULT_POINTS, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--no-cache", is_flag=True, help="Skip the on-disk point-regressor cache.")
@click.option("--out-json", required=True, type=click.Path(dir_okay=False))
@click.option("--out-csv", default=None, type=click.Path(dir_okay=False))
@click.pass_context
def eval_cmd(ctx, **_kw):
    """Shape error report between predicted and ground-truth shapes."""
    _apply_config(ctx, "eval")
    p = ctx.params
    if p["pred_meshes"] and p["gt_meshes"]:
        _eval_mesh_lists(ctx, p)
        return
    if not (p["model_path"] and p["pred_path"] and p["gt_path"]):
        raise InvalidValueError("eval needs --model/--pred/--gt or --pred-meshes/--gt-meshes")
    model = _load_model_arg(p["model_path"])
    pred_ids, pred_betas = read_betas_csv(p["pred_path"])
    gt_ids, gt_betas = read_betas_csv(p["gt_path"])
    if len(pred_ids) != len(gt_ids):
        raise DimensionMismatchError(
            f"{len(pred_ids)} predicted vs {len(gt_ids)} ground-truth rows")
    for arr, src in ((pred_betas, "pred"), (gt_betas, "gt")):
        if arr.shape[1] != model.num_betas:
            raise DimensionMismatchError(
                f"{src} betas have {arr.shape[1]} columns, model expects {model.num_betas}")

    reg = _cached_regressor(model, p["model_path"], p["num_points"], p["seed"],
                            use_cache=not p["no_cache"])
    rows = []
    p2ps, v2vs, pred_meas, gt_meas = [], [], [], []
    for i in range(len(gt_ids)):
        vp = shaped_vertices(model, pred_betas[i])
        vg = shaped_vertices(model, gt_betas[i])
        p2p = p2p_error(reg, vp, reg, vg)
        v2v = v2v_error(vp, vg)
        mp = measure(model, pred_betas[i])
        mg = measure(model, gt_betas[i])
        p2ps.append(p2p)
        v2vs.append(v2v)
        pred_meas.append(mp)
        gt_meas.append(mg)
        d = np.abs(mp.as_array() - mg.as_array())
        rows.append([gt_ids[i], fmt_float(p2p), fmt_float(v2v),
                     fmt_float(d[0] * 1000), fmt_float(d[1]), fmt_float(d[2] * 1000),
                     fmt_float(d[3] * 1000), fmt_float(d[4] * 1000)])

    from .metrics import ShapeErrorReport

    report = ShapeErrorReport(
        p2p20k_mm=float(np.mean(p2ps)),
        v2v_mm=float(np.mean(v2vs)),
        measurement_mae=measurement_mae(pred_meas, gt_meas),
    )
    payload = {
        "num_subjects": len(gt_ids),
        "points": p["num_points"],
        "seed": p["seed"],
        "metrics": report.to_json_dict(),
    }
    Path(p["out_json"]).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if p["out_csv"]:
        write_csv(p["out_csv"],
                  ["subject_id", "p2p20k_mm", "v2v_mm", "height_abs_mm", "weight_abs_kg",
                   "chest_abs_mm", "waist_abs_mm", "hip_abs_mm"], rows)
    _emit(ctx.obj, {"out": p["out_json"], **payload["metrics"]["measurement_mae"],
                    "p2p20k_mm": payload["metrics"]["p2p20k_mm"]})


def _eval_mesh_lists(ctx, p):
    pred_paths = [ln.strip() for ln in Path(p["pred_meshes"]).read_text().splitlines()
                  if ln.strip()]
    gt_paths = [ln.strip() for ln in Path(p["gt_meshes"]).read_text().splitlines()
                if ln.strip()]
    if len(pred_paths) != len(gt_paths):
        raise DimensionMismatchError(
            f"{len(pred_paths)} predicted vs {len(gt_paths)} ground-truth meshes")
    if not gt_paths:
        raise InvalidValueError("mesh lists are empty")
    first = load_mesh(gt_paths[0])
    reg = build_point_regressor(first, p["num_points"], p["seed"])
    rows, p2ps, v2vs = [], [], []
    for pp, gp in zip(pred_paths, gt_paths):
        mp = load_mesh(pp)
        mg = load_mesh(gp)
        if topology_hash(mp) != reg.topology_hash or topology_hash(mg) != reg.topology_hash:
            raise DimensionMismatchError(
                "mesh-list mode requires a shared topology; use the library "
                "transfer_point_regressor for cross-topology evaluation",
                mesh=pp,
            )
        p2p = p2p_error(reg, mp.vertices, reg, mg.vertices)
        v2v = v2v_error(mp.vertices, mg.vertices)
        p2ps.append(p2p)
        v2vs.append(v2v)
        rows.append([Path(gp).stem, fmt_float(p2p), fmt_float(v2v)])
    from .metrics import ShapeErrorReport

    report = ShapeErrorReport(p2p20k_mm=float(np.mean(p2ps)), v2v_mm=float(np.mean(v2vs)))
    payload = {
        "num_subjects": len(gt_paths),
        "points": p["num_points"],
        "seed": p["seed"],
        "metrics": report.to_json_dict(),
    }
    Path(p["out_json"]).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if p["out_csv"]:
        write_csv(p["out_csv"], ["subject_id", "p2p20k_mm", "v2v_mm"], rows)
    _emit(ctx.obj, {"out": p["out_json"], "p2p20k_mm": payload["metrics"]["p2p20k_mm"]})


def _cached_regressor(model: BodyModel, model_path: str, num_points: int, seed: int,
                      use_cache: bool):
    thash = topology_hash(model.template)
    if model_path == "fixture" or not use_cache:
        return build_point_regressor(model.template, num_points, seed)
    cache_dir = Path(model_path).with_name(Path(model_path).name + ".regcache")
    cache_file = cache_dir / f"reg_{thash}_p{num_points}_s{seed}.npz"
    if cache_file.is_file():
        data = np.load(cache_file)
        from .metrics import PointRegressor

        return PointRegressor(vertex_ids=data["vertex_ids"], weights=data["weights"],
                              num_vertices=int(data["num_vertices"]), topology_hash=thash,
                              seed=seed)
    reg = build_point_regressor(model.template, num_points, seed)
    cache_dir.mkdir(parents=True, exist_ok=True)
    np.savez(cache_file, vertex_ids=reg.vertex_ids, weights=reg.weights,
             num_vertices=reg.num_vertices)
    return reg


@cli.command()
@click.option("--site-a", "site_a", required=True, type=click.Path(exists=True),
              help="Embedding-set directory or manifest for the first source.")
@click.option("--site-b", "site_b", required=True, type=click.Path(exists=True))
@click.option("--tau", default=DEFAULT_TAU, show_default=True, type=float)
@click.option("--strict-prefilter", is_flag=True,
              help="Also require the per-target mean similarities to clear tau.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def dedup(ctx, **_kw):
    """Match subject identities across two embedding sources."""
    _apply_config(ctx, "dedup")
    p = ctx.params
    a = load_embeddings(p["site_a"])
    b = load_embeddings(p["site_b"])
    rep = match_identities(a, b, tau=p["tau"], strict_prefilter=p["strict_prefilter"])
    write_csv(p["out_path"], ["query_id", "target_id", "mean_similarity"],
              ([q, t, fmt_float(s)] for q, t, s in rep.matches))
    _emit(ctx.obj, {
        "matches": len(rep.matches), "candidates": rep.candidates,
        "rejected_prefilter": rep.rejected_prefilter, "rejected_mean": rep.rejected_mean,
        "tau": rep.tau, "out": p["out_path"],
    })


@cli.command()
@click.option("--subjects", "subjects_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", default="balance", show_default=True,
              type=click.Choice(["balance", "bmi"]))
@click.option("--bin-height", default=DEFAULT_BIN_HEIGHT_M, show_default=True, type=float)
@click.option("--bin-weight", default=DEFAULT_BIN_WEIGHT_KG, show_default=True, type=float)
@click.option("--cap", default=DEFAULT_BIN_CAP, show_default=True, type=int)
@click.option("--count", default=0, show_default=True, type=int,
              help="Number of subjects to pick in bmi mode.")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_context
def curate(ctx, **_kw):
    """Balanced or BMI-weighted subject subsampling."""
    _apply_config(ctx, "curate")
    p = ctx.params
    records = _read_subject_records(p["subjects_path"])
    if p["mode"] == "balance":
        selected, skipped = balance_sample(records, bin_height_m=p["bin_height"],
                                           bin_weight_kg=p["bin_weight"], cap=p["cap"],
                                           seed=p["seed"])
    else:
        selected = bmi_weighted_pick(records, p["count"], seed=p["seed"])
        skipped = 0
    write_csv(p["out_path"], ["subject_id"], ([sid] for sid in selected))
    _emit(ctx.obj, {"selected": len(selected), "skipped": skipped, "out": p["out_path"]})


def _read_subject_records(path: str) -> list[SubjectRecord]:
    import csv as _csv

    with open(path, newline="") as fh:
        reader = _csv.DictReader(fh)
        if reader.fieldnames is None or "subject_id" not in reader.fieldnames:
            raise FormatError("subject CSV needs a 'subject_id' column", path=path)
        records = []
        for row in reader:
            def num(key):
                v = row.get(key)
                return float(v) if v not in (None, "") else None

            records.append(SubjectRecord(
                subject_id=row["subject_id"],
                gender=row.get("gender", "neutral"),
                height_m=num("height_m"),
                weight_kg=num("weight_kg"),
                image_count=int(row.get("image_count") or 0),
                bmi=num("bmi"),
            ))
    return records


@cli.command()
@click.option("--eval", "eval_paths", multiple=True, required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Eval JSON report(s); repeatable.")
@click.option("--out", "outdir", required=True, type=click.Path(file_okay=False))
@click.option("--no-figures", is_flag=True)
@click.pass_context
def report(ctx, **_kw):
    """Render eval reports as CSV + Markdown tables and PNG figures."""
    _apply_config(ctx, "report")
    p = ctx.params
    from .report import write_report

    out = write_report(list(p["eval_paths"]), p["outdir"], figures=not p["no_figures"])
    _emit(ctx.obj, out)


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Abort:
        return 130
    except click.UsageError as exc:
        exc.show()
        return 2
    except click.ClickException as exc:
        exc.show()
        return exc.exit_code
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except ToolkitError as exc:
        print(json.dumps(exc.to_json_dict(), sort_keys=True), file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(json.dumps({"code": "internal", "message": str(exc), "context": {}},
                         sort_keys=True), file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
