//! Subcommand pipelines and result emission.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use henren::certify::{
    apriori_distortion, shadowing_defect, theorem_a_report, theorem_b_check, unicritical_probe, Distortion,
    ProbeOptions, TheoremBConstants,
};
use henren::maps::profile_1d;
use henren::regularity::{attractor_seeds, certify_return, lyapunov_exponent, ReturnCandidate};
use henren::renorm2d::{
    critical_value, nesting_margin, piece_diameters, renorm_sequence, RenormSequence, SequenceOptions, StopReason,
};
use henren::search::{realize_combinatorics, FamilySlice, SearchOptions};
use henren::unimodal::{kneading_flags, renorm_1d, renormalizable, CombinatoricsWord, UnimodalMap};
use henren::{Interval, MapSpec, Point2};

use crate::config::RunConfig;
use crate::CliError;

const FEIGENBAUM_A: f64 = -1.401_155_189_092_050_6;

fn need<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T, CliError> {
    v.as_ref().ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

/// Read a map spec; Hénon and quadratic specs may omit the domain.
pub fn load_map(path: &Path) -> Result<MapSpec, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--map: cannot read {}: {e}", path.display())))?;
    let mut v: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--map: {e}")))?;
    if let Some(obj) = v.as_object_mut() {
        if !obj.contains_key("domain") {
            let num = |k: &str| obj.get(k).and_then(Value::as_f64);
            let default = match obj.get("variant").and_then(Value::as_str) {
                Some("henon") => num("a").zip(num("b")).map(|(a, b)| MapSpec::henon(a, b).domain()),
                Some("quadratic_1d_embedding") => num("a").map(|a| MapSpec::quadratic_embedding(a).domain()),
                _ => None,
            };
            if let Some(d) = default {
                obj.insert("domain".into(), serde_json::to_value(d).expect("rect serializes"));
            }
        }
    }
    let mut spec: MapSpec = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("--map: {e}")))?;
    spec.resolve_artifacts(path.parent().unwrap_or(Path::new(".")))?;
    Ok(spec)
}

fn load_word(path: &Path) -> Result<CombinatoricsWord, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("--word: cannot read {}: {e}", path.display())))?;
    let w: CombinatoricsWord = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("--word: {e}")))?;
    for t in &w {
        t.validate().map_err(|e| CliError::Usage(format!("--word: {e}")))?;
    }
    Ok(w)
}

fn sequence_options(cfg: &RunConfig) -> SequenceOptions {
    let d = SequenceOptions::default();
    SequenceOptions {
        b_max: cfg.bmax.unwrap_or(d.b_max),
        eps: cfg.eps.unwrap_or(d.eps),
        lambda: cfg.lambda.unwrap_or(d.lambda),
        l: cfg.l.unwrap_or(d.l),
        certify: cfg.certify.unwrap_or(d.certify),
        certify_grid: cfg.grid.unwrap_or(d.certify_grid),
        ..d
    }
}

/// Human-readable reason a sequence stopped short.
pub fn stop_reason(stop: &StopReason) -> String {
    match stop {
        StopReason::DepthReached => "depth reached".into(),
        StopReason::NotRenormalizable { depth: 0 } => "profile not renormalizable".into(),
        StopReason::NotRenormalizable { depth } => format!("level {depth} not renormalizable"),
        StopReason::Undecided { depth, r } => format!("return of time {r} at depth {depth} is undecided"),
        StopReason::DepthLimited { return_time, limit } => {
            format!("return time {return_time} exceeds the precision guard {limit}")
        }
        StopReason::Failed { depth, message } => format!("renormalization failed at depth {depth}: {message}"),
        StopReason::WordMismatch { depth } => format!("type mismatch at depth {depth}"),
    }
}

fn short_of(seq: &RenormSequence, depth: usize) -> Result<(), CliError> {
    if seq.depth() < depth {
        return Err(CliError::Domain {
            reason: stop_reason(&seq.stop),
            detail: Some(format!("achieved depth {} of {depth}", seq.depth())),
        });
    }
    Ok(())
}

fn emit(cfg: &RunConfig, meta: bool, result: Value) -> Result<(), CliError> {
    let mut doc = serde_json::Map::new();
    doc.insert("command".into(), json!(cfg.command));
    if meta {
        let secs = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        doc.insert("meta".into(), json!({ "tool": "henren", "version": env!("CARGO_PKG_VERSION"), "unix_time": secs }));
    }
    let mut config = serde_json::to_value(cfg).expect("config serializes");
    if let Some(obj) = config.as_object_mut() {
        obj.retain(|_, v| !v.is_null());
    }
    doc.insert("config".into(), config);
    doc.insert("result".into(), result);
    let text = serde_json::to_string_pretty(&Value::Object(doc)).expect("value serializes") + "\n";
    match &cfg.out {
        Some(p) => std::fs::write(p, text)
            .map_err(|e| CliError::Usage(format!("--out: cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn write_csv<R: Serialize>(cfg: &RunConfig, header: &[&str], rows: &[R]) -> Result<(), CliError> {
    let Some(path) = &cfg.csv else { return Ok(()) };
    let io = |e: csv::Error| CliError::Usage(format!("--csv: cannot write {}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path).map_err(io)?;
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.serialize(r).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Usage(format!("--csv: {e}")))?;
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

pub fn dispatch(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    match cfg.command.as_deref() {
        Some("renormalize") => renormalize(cfg, meta),
        Some("certify") => certify(cfg, meta),
        Some("search") => search(cfg, meta),
        Some("converge") => converge(cfg, meta),
        Some("kneading") => kneading(cfg, meta),
        Some("lyapunov") => lyapunov(cfg, meta),
        other => Err(CliError::Usage(format!("unknown command {other:?}"))),
    }
}

#[derive(Serialize)]
struct LevelRow {
    depth: usize,
    r: usize,
    ratio: usize,
    sigma: f64,
    tau: f64,
    thinness: f64,
    curvature: f64,
    jac_min: f64,
    jac_max: f64,
    henon_like_residual: f64,
    l_min: Option<f64>,
    pass: Option<bool>,
    ranks: String,
}

const LEVEL_HEADER: [&str; 13] = [
    "depth", "R", "ratio", "sigma", "tau", "thinness", "curvature", "jac_min", "jac_max", "henon_like_residual",
    "L_min", "pass", "ranks",
];

fn level_rows(seq: &RenormSequence) -> Vec<LevelRow> {
    seq.levels
        .iter()
        .map(|l| LevelRow {
            depth: l.n,
            r: l.return_time,
            ratio: l.ratio,
            sigma: l.sigma,
            tau: l.tau,
            thinness: l.thinness,
            curvature: l.curvature,
            jac_min: l.jacobian[0],
            jac_max: l.jacobian[1],
            henon_like_residual: l.henon_like_residual,
            l_min: l.regularity.as_ref().map(|r| r.l_min()),
            pass: l.regularity.as_ref().map(|r| r.pass),
            ranks: l.ren_type.ranks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect()
}

fn renormalize(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let map = load_map(need(&cfg.map, "map")?)?;
    let depth = cfg.depth.unwrap_or(3);
    let seq = renorm_sequence(&map, depth, None, &sequence_options(cfg));
    let diameters: Vec<Value> = (0..=seq.depth()).map(|n| to_value(&piece_diameters(&seq, n).ok())).collect();
    let nesting: Vec<Option<f64>> = (1..seq.depth()).map(|n| nesting_margin(&seq, n).ok()).collect();
    let result = json!({
        "depth": seq.depth(),
        "reason": stop_reason(&seq.stop),
        "sequence": to_value(&seq),
        "critical_value": to_value(&critical_value(&seq).ok()),
        "piece_diameters": diameters,
        "nesting_margins": nesting,
    });
    emit(cfg, meta, result)?;
    write_csv(cfg, &LEVEL_HEADER, &level_rows(&seq))?;
    short_of(&seq, depth)
}

fn certify(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let map = load_map(need(&cfg.map, "map")?)?;
    let depth = cfg.depth.unwrap_or(1);
    let level = cfg.level.unwrap_or(depth);
    if level == 0 || level > depth {
        return Err(CliError::Usage(format!("--level: must lie in 1..={depth}")));
    }
    let opts = SequenceOptions { certify: false, ..sequence_options(cfg) };
    let seq = renorm_sequence(&map, depth, None, &opts);
    short_of(&seq, level)?;
    let lv = seq.level(level)?;
    let g = opts.certify_grid;
    let cand = ReturnCandidate {
        map: seq.base.clone(),
        r: lv.return_time,
        points: lv.domain_sample(g)?,
        refined_points: Some(lv.domain_sample(2 * g)?),
        vertical: None,
    };
    let rep = certify_return(&cand, opts.eps, opts.lambda, opts.l)?;
    eprintln!(
        "{} L_min = {:.6e} {} L = {} at level {level} (R = {})",
        if rep.pass { "PASS" } else { "FAIL" },
        rep.l_min(),
        if rep.pass { "<=" } else { ">" },
        opts.l,
        lv.return_time
    );
    emit(cfg, meta, json!({ "level": level, "R": lv.return_time, "verdict": if rep.pass { "pass" } else { "fail" }, "report": to_value(&rep) }))
}

#[derive(Serialize)]
struct IntervalRow {
    depth: usize,
    lo: f64,
    hi: f64,
    width: f64,
    steps: usize,
    r: usize,
    ranks: String,
}

fn search(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let word = load_word(need(&cfg.word, "word")?)?;
    let depth = cfg.depth.unwrap_or(word.len());
    if depth > word.len() {
        return Err(CliError::Usage(format!("--depth: word has only {} types", word.len())));
    }
    let mut slice = FamilySlice::henon(cfg.jacobian.unwrap_or(0.0));
    if let Some([lo, hi]) = cfg.params {
        slice.params = Interval::new(lo, hi);
    }
    let d = SearchOptions::default();
    let opts = SearchOptions {
        b_max: cfg.bmax.unwrap_or(d.b_max),
        eta: cfg.eta.unwrap_or(d.eta),
        scan: cfg.scan.unwrap_or(d.scan),
        tol: cfg.tol.unwrap_or(d.tol),
        certify: cfg.certify.unwrap_or(true),
        sequence: sequence_options(cfg),
        ..d
    };
    let res = realize_combinatorics(&slice, &word, depth, &opts)?;
    emit(cfg, meta, to_value(&res))?;
    let rows: Vec<IntervalRow> = res
        .traces
        .iter()
        .map(|t| IntervalRow {
            depth: t.depth + 1,
            lo: t.interval.lo,
            hi: t.interval.hi,
            width: t.interval.width(),
            steps: t.steps,
            r: word[t.depth].r,
            ranks: word[t.depth].ranks.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
        })
        .collect();
    write_csv(cfg, &["depth", "lo", "hi", "width", "steps", "R", "ranks"], &rows)?;
    match &res.failure {
        Some(f) => Err(CliError::Domain { reason: f.clone(), detail: None }),
        None => Ok(()),
    }
}

/// 1D renormalization orbit of `x² + a`, up to `n` maps after the first.
fn reference_orbit(a: f64, n: usize, b_max: usize) -> Vec<UnimodalMap> {
    let mut out = Vec::new();
    let mut f = UnimodalMap::quadratic(a);
    for _ in 0..n {
        let Some(ren) = renormalizable(&f, b_max) else { break };
        let Ok((g, _)) = renorm_1d(&f, &ren) else { break };
        out.push(g.clone());
        f = g;
    }
    out
}

#[derive(Serialize)]
struct ConvergeRow {
    depth: usize,
    r: usize,
    thinness: f64,
    width: f64,
    aspect: f64,
    chart_c0: Option<f64>,
    chart_c1: Option<f64>,
    c0_norm: f64,
    c1_norm: f64,
    profile_distance: Option<f64>,
    distortion: Option<f64>,
    piece_total: Option<f64>,
}

const CONVERGE_HEADER: [&str; 12] = [
    "depth", "R", "thinness", "width", "aspect", "chart_c0", "chart_c1", "c0_norm", "c1_norm", "profile_distance",
    "distortion", "piece_total",
];

fn converge(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let map = load_map(need(&cfg.map, "map")?)?;
    let depth = cfg.depth.unwrap_or(3);
    let opts = sequence_options(cfg);
    let seq = renorm_sequence(&map, depth, None, &opts);
    short_of(&seq, depth.min(2))?;
    let refs = reference_orbit(cfg.reference.unwrap_or(FEIGENBAUM_A), seq.depth(), opts.b_max);
    let reference = (refs.len() >= seq.depth()).then_some(refs.as_slice());
    let report = theorem_a_report(&seq, reference)?;
    let eps0 = cfg.eps0.unwrap_or(opts.eps);
    let dflt = TheoremBConstants::default();
    let consts = TheoremBConstants { c: cfg.c.unwrap_or(dflt.c), k: cfg.k.unwrap_or(dflt.k), d: cfg.d.unwrap_or(dflt.d), b: None };
    let finite = theorem_b_check(&seq, &consts, eps0);
    let shadowing: Vec<Value> = (0..seq.depth())
        .map(|n| match shadowing_defect(&seq, n, 1) {
            Ok(v) => json!({ "n": n, "k": 1, "defect": v }),
            Err(e) => json!({ "n": n, "k": 1, "error": e.to_string() }),
        })
        .collect();
    let distortion: Vec<Option<Distortion>> = (1..=seq.depth()).map(|n| apriori_distortion(&seq, n).ok()).collect();
    let pieces: Vec<Option<f64>> = (0..=seq.depth()).map(|n| piece_diameters(&seq, n).ok().map(|p| p.total)).collect();
    let probe = match cfg.probe_t {
        Some(t) => {
            let po = ProbeOptions {
                t,
                eps: opts.eps,
                lambda: opts.lambda,
                samples: cfg.probe_samples.unwrap_or(ProbeOptions::default().samples),
                ..Default::default()
            };
            Some(unicritical_probe(&seq, &po)?)
        }
        None => None,
    };
    let result = json!({
        "depth": seq.depth(),
        "reason": stop_reason(&seq.stop),
        "convergence": to_value(&report),
        "finite_check": to_value(&finite),
        "shadowing": shadowing,
        "distortion": to_value(&distortion),
        "piece_totals": pieces,
        "probe": to_value(&probe),
    });
    emit(cfg, meta, result)?;
    let rows: Vec<ConvergeRow> = (0..report.depths.len())
        .map(|i| ConvergeRow {
            depth: report.depths[i],
            r: report.return_times[i],
            thinness: report.thinness[i],
            width: report.widths[i],
            aspect: report.aspect[i],
            chart_c0: report.chart_distances[i].map(|c| c.c0),
            chart_c1: report.chart_distances[i].map(|c| c.c1),
            c0_norm: report.c0_norm[i],
            c1_norm: report.c1_norm[i],
            profile_distance: report.profile_distances.as_ref().map(|d| d[i]),
            distortion: distortion[i].as_ref().map(|d| d.distortion),
            piece_total: pieces[i + 1],
        })
        .collect();
    write_csv(cfg, &CONVERGE_HEADER, &rows)?;
    short_of(&seq, depth)
}

fn kneading(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let map = load_map(need(&cfg.map, "map")?)?;
    let f = profile_1d(&map)?;
    let flags = kneading_flags(&f, cfg.eta.unwrap_or(1e-3), cfg.chi.unwrap_or(3))?;
    emit(cfg, meta, json!({ "critical_point": f.c, "critical_value": f.v, "flags": to_value(&flags) }))
}

fn lyapunov(cfg: &RunConfig, meta: bool) -> Result<(), CliError> {
    let map = load_map(need(&cfg.map, "map")?)?;
    let n = cfg.seeds.unwrap_or(8);
    let transient = cfg.transient.unwrap_or(256);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0));
    let mut seeds = Vec::with_capacity(n);
    for _ in 0..n {
        let start = Point2::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1));
        seeds.extend(attractor_seeds(&map, start, transient, 1, 1)?);
    }
    let est = lyapunov_exponent(&map, &seeds, cfg.horizon.unwrap_or(256))?;
    emit(cfg, meta, json!({ "seeds": to_value(&seeds), "estimate": to_value(&est) }))
}
