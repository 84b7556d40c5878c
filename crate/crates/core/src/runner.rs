//! Batch runner: reads a config, runs one experiment on a fixed-size thread
//! pool and writes CSV files plus `manifest.txt` into the output directory.
//!
//! Every random draw comes from one ChaCha8 stream seeded by `seed`, drawn
//! sequentially; parallel sections only consume values drawn beforehand,
//! so outputs do not depend on the thread count.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::boxfit::BoxFitting;
use crate::config::Config;
use crate::covering::{covering_number, PointCloud};
use crate::csvio::{read_phi_cloud, read_point_cloud, write_phi_cloud, write_point_cloud, write_table};
use crate::error::{Error, Result};
use crate::fixtures;
use crate::flow::{self, GPoint};
use crate::focusing::{self, FocusParams, WeightedMeasure};
use crate::localfield::{FieldDesc, LocalField, Padic, Reals, Scale};
use crate::projection::{self, ProjConfig};
use crate::rep::{PhiCloud, RepSpace};
use crate::sumproduct::{self, SumProdConfig};

#[derive(Clone, Debug, Default)]
pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

/// Process exit code for an error: 2 config/input, 3 numerical, 4 I/O.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) | Error::Csv(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

/// Runs `$body` with `$f` bound to the configured field.
macro_rules! with_field {
    ($cfg:expr, $f:ident => $body:expr) => {
        match field_desc($cfg) {
            Err(e) => Err(e),
            Ok(FieldDesc::Real) => {
                let $f = Reals;
                $body
            }
            Ok(FieldDesc::Padic { p, precision }) => match padic_field(p, precision) {
                Err(e) => Err(e),
                Ok($f) => $body,
            },
        }
    };
}

type Rng64 = ChaCha8Rng;

/// Runs the experiment named in the config; returns the output directory.
pub fn run(args: &RunArgs) -> Result<PathBuf> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", args.config.display()))))?;
    let mut cfg = Config::parse(&text)?;
    if let Some(s) = args.seed {
        cfg.set("seed", s);
    }
    if let Some(t) = args.threads {
        cfg.set("threads", t);
    }
    if let Some(o) = &args.out {
        cfg.set("out", o.display());
    }
    let experiment = cfg.str("experiment")?;
    let seed: u64 = cfg.get("seed", 0)?;
    let threads: usize = cfg.get("threads", 1)?;
    let out = PathBuf::from(cfg.str("out")?);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    let mut rng = Rng64::seed_from_u64(seed);
    // validate the experiment name before touching the file system
    if !["proj", "sumprod", "focus", "flow", "fixtures"].contains(&experiment.as_str()) {
        return Err(Error::InvalidConfig(format!("unknown experiment `{experiment}`")));
    }
    fs::create_dir_all(&out)?;
    let files = pool.install(|| match experiment.as_str() {
        "proj" => with_field!(&cfg, f => run_proj(f, &cfg, &out, &mut rng)),
        "sumprod" => with_field!(&cfg, f => run_sumprod(f, &cfg, &out, &mut rng)),
        "focus" => with_field!(&cfg, f => run_focus(f, &cfg, &out, &mut rng)),
        "flow" => run_flow(&cfg, &out, &mut rng),
        _ => with_field!(&cfg, f => run_fixture(f, &cfg, &out, &mut rng)),
    })?;
    for k in cfg.unused() {
        eprintln!("warning: unused config key `{k}`");
    }
    let mut manifest = format!("equilab {}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in cfg.resolved() {
        manifest.push_str(&format!("{k} = {v}\n"));
    }
    manifest.push_str("[files]\n");
    for f in &files {
        manifest.push_str(&format!("{f}\n"));
    }
    fs::write(out.join("manifest.txt"), manifest)?;
    Ok(out)
}

fn field_desc(cfg: &Config) -> Result<FieldDesc> {
    cfg.get("field", FieldDesc::Real)
}

fn padic_field(p: u64, precision: u32) -> Result<Padic> {
    Padic::new(p, precision).map_err(|e| Error::InvalidConfig(e.to_string()))
}

fn real_only<F: LocalField>(f: &F, what: &str) -> Result<()> {
    if f.is_exact() {
        return Err(Error::InvalidConfig(format!("{what} is only available over the reals")));
    }
    Ok(())
}

/// Fixtures over the reals only, by name, as a `Phi` cloud with optional
/// weights. Calls `real` only when the field is `R`.
fn phi_source<F: BoxFitting>(
    f: F,
    cfg: &Config,
    sec: &str,
    rng: &mut Rng64,
    real: impl FnOnce(&str, &Config, &mut Rng64) -> Result<(PhiCloud<Reals>, Option<Vec<f64>>)>,
    cast: impl FnOnce(PhiCloud<Reals>) -> PhiCloud<F>,
) -> Result<(PhiCloud<F>, Option<Vec<f64>>)> {
    if let Some(path) = cfg.opt(&format!("{sec}.input")) {
        return read_phi_cloud(path, f);
    }
    let kind = cfg.str(&format!("{sec}.fixture"))?;
    let key = |k: &str| format!("{sec}.{k}");
    match kind.as_str() {
        "planted_box" => {
            let rep = RepSpace::new(cfg.get(&key("d"), 2)?, cfg.get(&key("m"), 2)?);
            let ks: Vec<u32> = cfg.list(&key("ks"), "")?;
            let n: usize = cfg.req(&key("n"))?;
            let noise: f64 = cfg.get(&key("noise"), 0.0)?;
            Ok((fixtures::planted_box(f, rep, &ks, noise, n, rng)?.1, None))
        }
        "uniform" => {
            let rep = RepSpace::new(cfg.get(&key("d"), 2)?, cfg.get(&key("m"), 1)?);
            let n: usize = cfg.req(&key("n"))?;
            Ok((PhiCloud::sample_uniform(f, rep, n, rng), None))
        }
        other => {
            real_only(&f, &format!("fixture `{other}`"))?;
            let (c, w) = real(other, cfg, rng)?;
            Ok((cast(c), w))
        }
    }
}

/// Real-only `Phi` fixtures.
fn real_phi_fixture(sec: &str, kind: &str, cfg: &Config, rng: &mut Rng64) -> Result<(PhiCloud<Reals>, Option<Vec<f64>>)> {
    let key = |k: &str| format!("{sec}.{k}");
    match kind {
        "generic" => {
            let rep = RepSpace::new(cfg.get(&key("d"), 2)?, cfg.get(&key("m"), 1)?);
            Ok((fixtures::generic_phi_cloud(rep, cfg.req(&key("alpha"))?, cfg.req(&key("k"))?, rng), None))
        }
        "grid" => Ok((fixtures::lowest_weight_grid(cfg.req(&key("k"))?), None)),
        "two_scale" => {
            let mu = fixtures::two_scale_measure(cfg.req(&key("clusters"))?, cfg.req(&key("per"))?, cfg.req(&key("k_small"))?, rng)?;
            Ok((mu.cloud, Some(mu.weights)))
        }
        "focus_planted" => {
            let rep = RepSpace::new(2, cfg.get(&key("m"), 2)?);
            let dirs = fixtures::random_frame(rep.m, cfg.get(&key("dirs"), 1)?, rng);
            let y = vec![0.0; rep.dim()];
            let (_, mu) = fixtures::planted_focus_measure(rep, &y, &dirs, cfg.req(&key("k1"))?, cfg.req(&key("k2"))?, cfg.req(&key("n"))?, rng)?;
            Ok((mu.cloud, Some(mu.weights)))
        }
        other => Err(Error::InvalidConfig(format!("unknown fixture `{other}`"))),
    }
}

/// Reinterprets a real cloud in a field known to be `R`.
fn cast_real<F: LocalField>(f: F) -> impl FnOnce(PhiCloud<Reals>) -> PhiCloud<F> {
    move |c: PhiCloud<Reals>| {
        let rep = c.rep;
        let mut out = PhiCloud::new(f, rep);
        for i in 0..c.len() {
            let p: Vec<F::Elem> = c.point(i).iter().map(|x| f.parse(&format!("{x}")).expect("real field")).collect();
            out.push(&p);
        }
        out
    }
}

/// Scale index `key` on the base named by `scale_base` (`e`, `p`, `q` or `2`).
fn ladder(cfg: &Config, key: &str) -> Result<Scale> {
    let base = cfg.get("scale_base", "e".to_string())?;
    Ok(Scale { k: cfg.req(key)?, base: base.parse().map_err(|_| Error::InvalidConfig(format!("scale_base must be e, p, q or 2, got `{base}`")))? })
}

fn fmt_f(x: f64) -> String {
    // avoid printing "-0"
    format!("{}", x + 0.0)
}

/// Size of a greedy `delta`-separated net, which is also a `delta`-cover.
pub fn net_count<F: LocalField>(c: &PhiCloud<F>, k: u32) -> Result<usize> {
    let mu = WeightedMeasure::uniform(c.clone(), 1.0)?;
    Ok(focusing::greedy_net(&mu, k).len())
}

fn summary(path: &Path, rows: Vec<(&str, String)>) -> Result<()> {
    write_table(path, &["key", "value"], rows.into_iter().map(|(k, v)| vec![k.to_string(), v]))
}

fn run_proj<F: BoxFitting>(f: F, cfg: &Config, out: &Path, rng: &mut Rng64) -> Result<Vec<String>> {
    let (theta, _) = phi_source(f, cfg, "proj", rng, |k, c, r| real_phi_fixture("proj", k, c, r), cast_real(f))?;
    if theta.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let scale = ladder(cfg, "proj.k")?;
    let alpha = match cfg.opt("proj.alpha").as_deref() {
        None | Some("measured") => projection::measured_alpha(&theta, scale),
        Some(v) => v.parse().map_err(|_| Error::InvalidConfig(format!("key `proj.alpha`: cannot parse `{v}`")))?,
    };
    let base = ProjConfig::new(alpha, scale);
    let pc = ProjConfig {
        eps: cfg.get("proj.eps", base.eps)?,
        c_big: cfg.get("proj.c_big", base.c_big)?,
        c_small: cfg.get("proj.c_small", base.c_small)?,
        r_samples: cfg.get("proj.r_samples", base.r_samples)?,
        anchor_budget: cfg.get("proj.anchor_budget", base.anchor_budget)?,
        cap_counts: cfg.get("proj.cap_counts", base.cap_counts)?,
        ..base
    };
    if pc.r_samples == 0 {
        return Err(Error::InvalidConfig("proj.r_samples must be positive".into()));
    }
    let profile = projection::projection_profile(&theta, &pc, rng)?;
    write_table(
        out.join("profile.csv"),
        &["r", "count", "threshold", "good"],
        (0..profile.rs.len()).map(|i| vec![f.format(profile.rs[i]), profile.counts[i].to_string(), fmt_f(profile.threshold), (profile.is_good(i) as u8).to_string()]),
    )?;
    let search = projection::find_representation_box(&theta, &pc);
    let verdict = projection::classify(&profile, search.found.is_some());
    let mut rows = vec![
        ("points", theta.len().to_string()),
        ("alpha", fmt_f(alpha)),
        ("cover", profile.cover.to_string()),
        ("precondition_ok", profile.precondition_ok.to_string()),
        ("good_fraction", fmt_f(profile.good_fraction())),
        ("exceptional_fraction", fmt_f(profile.exceptional_fraction())),
        ("box_found", search.found.is_some().to_string()),
        ("box_fitted_ks", search.fitted.as_ref().map(|b| format!("{:?}", b.ks)).unwrap_or_default()),
        ("box_ks", search.found.as_ref().map(|b| format!("{:?}", b.ks)).unwrap_or_default()),
        ("verdict", verdict.label().to_string()),
    ];
    let mut files = vec!["profile.csv".to_string()];
    if theta.rep.d == 2 {
        let audit = projection::trivial_estimate_audit(&theta, &pc, rng)?;
        rows.push(("trivial_zero_failure", fmt_f(audit.zero_failure)));
        rows.push(("trivial_plus_failure", fmt_f(audit.plus_failure)));
    }
    if let Some(b) = &search.found {
        fs::write(out.join("box.txt"), projection::box_report(b))?;
        files.push("box.txt".into());
    }
    summary(&out.join("summary.csv"), rows)?;
    files.push("summary.csv".into());
    Ok(files)
}

fn point_source<F: BoxFitting>(f: F, cfg: &Config, which: &str, rng: &mut Rng64) -> Result<PointCloud<F>> {
    if let Some(path) = cfg.opt(&format!("sumprod.input{which}")) {
        return read_point_cloud(path, f);
    }
    let kind = cfg.str("sumprod.fixture")?;
    let key = |k: &str| format!("sumprod.{k}");
    let m: usize = cfg.get(&key("m"), 2)?;
    match kind.as_str() {
        "iid_cover" => Ok(fixtures::iid_ball_with_cover(f, m, ladder(cfg, "sumprod.k")?, cfg.req(&key("target"))?, rng)),
        "iid" => Ok(fixtures::iid_ball(f, m, cfg.req(&key("n"))?, rng)),
        other => Err(Error::InvalidConfig(format!("unknown sum-product fixture `{other}`"))),
    }
}

/// Shared-direction segments and Cantor sets need field-specific
/// constructors, so they are built here by field.
fn sumprod_pair_real(cfg: &Config, rng: &mut Rng64) -> Result<Option<(PointCloud<Reals>, PointCloud<Reals>)>> {
    let kind = cfg.opt("sumprod.fixture").unwrap_or_default();
    let m: usize = cfg.get("sumprod.m", 2)?;
    Ok(match kind.as_str() {
        "segment" => {
            let k: u32 = cfg.req("sumprod.box_k")?;
            let kd: u32 = cfg.req("sumprod.k")?;
            let u = fixtures::random_frame(m, 1, rng).remove(0);
            let b1: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            let b2: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            Some((fixtures::real_segment(&b1, &u, k, kd), fixtures::real_segment(&b2, &u, k, kd)))
        }
        "cantor" => {
            let c = fixtures::real_cantor_set(m, cfg.req("sumprod.depth")?);
            Some((c.clone(), c))
        }
        _ => None,
    })
}

fn sumprod_pair_padic(f: Padic, cfg: &Config, rng: &mut Rng64) -> Result<Option<(PointCloud<Padic>, PointCloud<Padic>)>> {
    let kind = cfg.opt("sumprod.fixture").unwrap_or_default();
    let m: usize = cfg.get("sumprod.m", 2)?;
    Ok(match kind.as_str() {
        "segment" => {
            let k: u32 = cfg.req("sumprod.box_k")?;
            let kd: u32 = cfg.req("sumprod.k")?;
            let u = fixtures::random_frame_in(f, m, 1, rng).remove(0);
            let b1: Vec<u64> = (0..m).map(|_| f.sample_unit(rng)).collect();
            let b2: Vec<u64> = (0..m).map(|_| f.sample_unit(rng)).collect();
            Some((fixtures::padic_segment(f, &b1, &u, k, kd), fixtures::padic_segment(f, &b2, &u, k, kd)))
        }
        "cantor" => {
            let c = fixtures::padic_cantor_set(f, m, cfg.req("sumprod.depth")?);
            Some((c.clone(), c))
        }
        _ => None,
    })
}

fn run_sumprod<F: BoxFitting>(f: F, cfg: &Config, out: &Path, rng: &mut Rng64) -> Result<Vec<String>> {
    let pair = match f.desc() {
        FieldDesc::Real => sumprod_pair_real(cfg, rng)?.map(|(a, b)| (cast_points(f, a), cast_points(f, b))),
        FieldDesc::Padic { p, precision } => {
            let pf = Padic::new(p, precision)?;
            sumprod_pair_padic(pf, cfg, rng)?.map(|(a, b)| (cast_points(f, a), cast_points(f, b)))
        }
    };
    let (t1, t2) = match pair {
        Some(p) => p,
        None => (point_source(f, cfg, "1", rng)?, point_source(f, cfg, "2", rng)?),
    };
    if t1.is_empty() || t2.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if t1.dim != t2.dim {
        return Err(Error::DimensionMismatch { expected: t1.dim, got: t2.dim });
    }
    let scale = ladder(cfg, "sumprod.k")?;
    let base = SumProdConfig::new(cfg.req("sumprod.alpha_hat")?, scale);
    let sc = SumProdConfig {
        eps1: cfg.get("sumprod.eps1", base.eps1)?,
        eps2: cfg.get("sumprod.eps2", base.eps2)?,
        c_big: cfg.get("sumprod.c_big", base.c_big)?,
        c_small: cfg.get("sumprod.c_small", base.c_small)?,
        r_samples: cfg.get("sumprod.r_samples", base.r_samples)?,
        budget: cfg.get("sumprod.budget", base.budget)?,
        strict: cfg.get("sumprod.strict", base.strict)?,
        anchor_budget: cfg.get("sumprod.anchor_budget", base.anchor_budget)?,
        cap_counts: cfg.get("sumprod.cap_counts", base.cap_counts)?,
        ..base
    };
    if sc.r_samples == 0 {
        return Err(Error::InvalidConfig("sumprod.r_samples must be positive".into()));
    }
    let prof = sumproduct::exceptional_measure(&t1, &t2, &sc, rng)?;
    write_table(
        out.join("exceptional.csv"),
        &["r", "count", "pairs", "exact", "exceptional"],
        (0..prof.rs.len()).map(|i| {
            let c = &prof.counts[i];
            vec![f.format(prof.rs[i]), c.count.to_string(), c.pairs.to_string(), (c.exact as u8).to_string(), (prof.is_exceptional(i) as u8).to_string()]
        }),
    )?;
    let search = sumproduct::find_common_box(&t1, &t2, &sc);
    let (lo, hi) = prof.interval();
    summary(
        &out.join("summary.csv"),
        vec![
            ("points1", t1.len().to_string()),
            ("points2", t2.len().to_string()),
            ("threshold", fmt_f(prof.threshold)),
            ("precondition_ok", prof.precondition_ok.to_string()),
            ("exceptional_fraction", fmt_f(prof.fraction())),
            ("wilson_lo", fmt_f(lo)),
            ("wilson_hi", fmt_f(hi)),
            ("all_exact", prof.all_exact().to_string()),
            ("common_box_found", search.found.is_some().to_string()),
            ("common_box_ks", search.found.as_ref().map(|c| format!("{:?}", c.ks())).unwrap_or_default()),
        ],
    )?;
    Ok(vec!["exceptional.csv".into(), "summary.csv".into()])
}

/// Same-field reinterpretation through the text form.
fn cast_points<F: LocalField, G: LocalField>(f: F, c: PointCloud<G>) -> PointCloud<F> {
    let g = c.field;
    PointCloud::from_points(f, c.dim, c.points().map(|p| p.iter().map(|&x| f.parse(&g.format(x)).expect("same field")).collect()))
}

fn run_focus<F: BoxFitting>(f: F, cfg: &Config, out: &Path, rng: &mut Rng64) -> Result<Vec<String>> {
    let (cloud, weights) = phi_source(f, cfg, "focus", rng, |k, c, r| real_phi_fixture("focus", k, c, r), cast_real(f))?;
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mu = match weights {
        Some(w) => WeightedMeasure::new(cloud, w)?,
        None => WeightedMeasure::uniform(cloud, cfg.get("focus.total", 1.0)?)?,
    };
    let base = FocusParams::new(cfg.req("focus.alpha")?, cfg.req("focus.k1")?, cfg.req("focus.k2")?);
    let p = FocusParams {
        eps_prime: cfg.get("focus.eps_prime", base.eps_prime)?,
        a: cfg.get("focus.a", base.a)?,
        nhd_factor: cfg.get("focus.nhd_factor", base.nhd_factor)?,
        kappa: cfg.get("focus.kappa", base.kappa)?,
        anchor_budget: cfg.get("focus.anchor_budget", base.anchor_budget)?,
        ..base
    };
    p.validate()?;
    let ell = p.k2 - p.k1;
    if ell % 2 != 0 {
        return Err(Error::InvalidConfig("focus.k2 - focus.k1 must be even (delta_2 = q^{-2l} b)".into()));
    }
    let dec = focusing::ip_fs_decompose(&mu, p.k1, ell / 2, &p)?;
    let scan = &dec.scan;
    write_table(
        out.join("scan.csv"),
        &["y_index", "focused", "exact", "ks"],
        scan.net.iter().zip(&scan.witnesses).map(|(&y, w)| {
            vec![
                y.to_string(),
                (w.is_some() as u8).to_string(),
                w.as_ref().map_or("0", |w| if w.diag.passes() { "1" } else { "0" }).to_string(),
                w.as_ref().map(|w| w.rbox.ks.iter().map(u32::to_string).collect::<Vec<_>>().join(" ")).unwrap_or_default(),
            ]
        }),
    )?;
    write_table(out.join("labels.csv"), &["index", "part"], dec.labels(mu.len()).iter().enumerate().map(|(i, l)| vec![i.to_string(), ["ip", "fs", "negligible"][*l as usize].to_string()]))?;
    let (ip, fs_mass, neg) = dec.masses(&mu);
    let mut rows = vec![
        ("points", mu.len().to_string()),
        ("net", scan.net.len().to_string()),
        ("focused_fraction", fmt_f(scan.focused_fraction())),
        ("exactly_focused_fraction", fmt_f(scan.exactly_focused_fraction())),
        ("mass_ip", fmt_f(ip)),
        ("mass_fs", fmt_f(fs_mass)),
        ("mass_negligible", fmt_f(neg)),
        ("mass_total", fmt_f(mu.total())),
        ("budget_exceeded", dec.budget_exceeded.to_string()),
    ];
    let min_nb: f64 = cfg.get("focus.min_neighbours", 20.0)?;
    if let Some(w) = scan.focused().filter(|w| w.diag.passes()).min_by_key(|w| w.rbox.ks.iter().sum::<u32>()) {
        let y = mu.cloud.point(w.y_index).to_vec();
        match focusing::multiple_of_three_audit(&mu, &y, &w.rbox, &p, min_nb) {
            Ok(a) => {
                rows.push(("audit_alpha", fmt_f(a.alpha_est)));
                rows.push(("audit_nearest", a.nearest.to_string()));
                rows.push(("audit_gap", fmt_f(a.gap)));
            }
            Err(e) => rows.push(("audit_error", e.to_string())),
        }
    }
    let mut files = vec!["scan.csv".to_string(), "labels.csv".to_string()];
    let n_interp: usize = cfg.get("focus.interp_r", 0)?;
    if n_interp > 0 {
        let rs = projection::sample_rs(&f, n_interp, rng);
        let v = focusing::interpolation_audit(&mu, cfg.get("focus.interp_ell", 2)?, &rs, cfg.req("focus.interp_k_hat")?)?;
        let o = |x: Option<f64>| x.map(fmt_f).unwrap_or_default();
        write_table(
            out.join("interp.csv"),
            &["r", "alpha1", "alpha2", "pushed", "margin"],
            v.iter().map(|x| vec![f.format(x.r), o(x.alpha1), o(x.alpha2), o(x.pushed), o(x.margin())]),
        )?;
        files.push("interp.csv".into());
    }
    summary(&out.join("summary.csv"), rows)?;
    files.push("summary.csv".into());
    Ok(files)
}

fn run_flow(cfg: &Config, out: &Path, rng: &mut Rng64) -> Result<Vec<String>> {
    let x0 = match cfg.get("flow.x0", "generic".to_string())?.as_str() {
        "identity" => GPoint::identity(),
        "generic" => flow::generic_x0(),
        other => return Err(Error::InvalidConfig(format!("flow.x0 must be `identity` or `generic`, got `{other}`"))),
    };
    let t: u32 = cfg.req("flow.T")?;
    let r: u32 = cfg.get("flow.R", 1)?;
    let d = flow::DichotomyConfig::default();
    let dc = flow::DichotomyConfig {
        a: cfg.get("flow.a", d.a)?,
        k: cfg.get("flow.k", d.k)?,
        search_height: cfg.get("flow.search_height", d.search_height)?,
        n_r: cfg.get("flow.n_r", d.n_r)?,
        n_haar: cfg.get("flow.n_haar", d.n_haar)?,
        tau_window: cfg.get("flow.tau_window", d.tau_window)?,
        n_probe_r: cfg.get("flow.n_probe_r", d.n_probe_r)?,
    };
    let mut suite = flow::suite();
    suite.push(("one".into(), flow::TestFunction::Constant));
    let report = flow::dichotomy_report(&x0, t, r, &suite, &dc, rng)?;
    let rs = flow::equispaced(dc.n_r);
    let arc = flow::arc_points(&x0, t, &rs)?;
    let mut rows = Vec::with_capacity(arc.len() * suite.len());
    for (ri, x) in rs.iter().zip(&arc) {
        for (id, phi) in &suite {
            rows.push(vec![fmt_f(*ri), t.to_string(), id.clone(), fmt_f(phi.eval(x))]);
        }
    }
    write_table(out.join("arc.csv"), &["r", "tau", "phi_id", "value"], rows)?;
    write_table(
        out.join("proximity.csv"),
        &["candidate", "proxy", "proxy_arc"],
        report.proximity.iter().map(|p| vec![p.candidate.to_string(), fmt_f(p.at_x0), fmt_f(p.on_arc)]),
    )?;
    write_table(
        out.join("discrepancy.csv"),
        &["phi_id", "arc_mean", "arc_se", "haar_mean", "haar_se", "discrepancy", "within"],
        report.rows.iter().map(|row| {
            let d = &row.disc;
            vec![row.id.clone(), fmt_f(d.arc_mean), fmt_f(d.arc_se), fmt_f(d.haar_mean), fmt_f(d.haar_se), fmt_f(d.value), (row.within as u8).to_string()]
        }),
    )?;
    let mut head: Vec<String> = (1..=3).flat_map(|j| ["a", "b", "c", "d"].map(|e| format!("g{j}_{e}"))).collect();
    head.extend((1..=3).map(|j| format!("reduced{j}")));
    let h: Vec<&str> = head.iter().map(String::as_str).collect();
    write_table(out.join("x0.csv"), &h, [x0.csv_fields()])?;
    summary(
        &out.join("summary.csv"),
        vec![
            ("T", t.to_string()),
            ("R", r.to_string()),
            ("threshold_equi", fmt_f(report.threshold_equi)),
            ("threshold_orbit", fmt_f(report.threshold_orbit)),
            ("part1", report.part1.to_string()),
            ("part2", report.part2.to_string()),
            ("haar_deficit", fmt_f(report.haar_deficit)),
        ],
    )?;
    Ok(["arc.csv", "proximity.csv", "discrepancy.csv", "x0.csv", "summary.csv"].map(String::from).to_vec())
}

fn run_fixture<F: BoxFitting>(f: F, cfg: &Config, out: &Path, rng: &mut Rng64) -> Result<Vec<String>> {
    let kind = cfg.str("fixtures.kind")?;
    match kind.as_str() {
        "segment" | "cantor" | "iid_cover" | "iid" => {
            let t = match f.desc() {
                FieldDesc::Real => fixture_points_real(&kind, cfg, rng)?.map(|c| cast_points(f, c)),
                FieldDesc::Padic { p, precision } => fixture_points_padic(Padic::new(p, precision)?, &kind, cfg, rng)?.map(|c| cast_points(f, c)),
            };
            let t = match t {
                Some(t) => t,
                None => {
                    let m: usize = cfg.get("fixtures.m", 2)?;
                    if kind == "iid" {
                        fixtures::iid_ball(f, m, cfg.req("fixtures.n")?, rng)
                    } else {
                        fixtures::iid_ball_with_cover(f, m, ladder(cfg, "fixtures.k")?, cfg.req("fixtures.target")?, rng)
                    }
                }
            };
            write_point_cloud(out.join("points.csv"), &t)?;
            summary(&out.join("summary.csv"), vec![("points", t.len().to_string()), ("dim", t.dim.to_string())])?;
        }
        _ => {
            let (cloud, weights) = match kind.as_str() {
                "planted_box" => {
                    let rep = RepSpace::new(cfg.get("fixtures.d", 2)?, cfg.get("fixtures.m", 2)?);
                    let ks: Vec<u32> = cfg.list("fixtures.ks", "")?;
                    let (b, c) = fixtures::planted_box(f, rep, &ks, cfg.get("fixtures.noise", 0.0)?, cfg.req("fixtures.n")?, rng)?;
                    let k: u32 = cfg.get("fixtures.k", 8)?;
                    let nb = crate::rep::box_covering_number(&b, Scale::ladder(k));
                    summary(
                        &out.join("summary.csv"),
                        vec![("points", c.len().to_string()), ("box_ks", format!("{:?}", b.ks)), ("box_cover", fmt_f(nb)), ("cloud_net", net_count(&c, k)?.to_string()), ("cloud_grid_cells", covering_number(&c.points, Scale::ladder(k)).to_string())],
                    )?;
                    (c, None)
                }
                "uniform" => {
                    let rep = RepSpace::new(cfg.get("fixtures.d", 2)?, cfg.get("fixtures.m", 1)?);
                    (PhiCloud::sample_uniform(f, rep, cfg.req("fixtures.n")?, rng), None)
                }
                other => {
                    real_only(&f, &format!("fixture `{other}`"))?;
                    let (c, w) = real_phi_fixture("fixtures", other, cfg, rng)?;
                    (cast_real(f)(c), w)
                }
            };
            if cloud.is_empty() {
                return Err(Error::EmptyCloud);
            }
            write_phi_cloud(out.join("cloud.csv"), &cloud, weights.as_deref())?;
            if kind != "planted_box" {
                summary(&out.join("summary.csv"), vec![("points", cloud.len().to_string()), ("d", cloud.rep.d.to_string()), ("m", cloud.rep.m.to_string())])?;
            }
            return Ok(vec!["cloud.csv".into(), "summary.csv".into()]);
        }
    }
    Ok(vec!["points.csv".into(), "summary.csv".into()])
}

fn fixture_points_real(kind: &str, cfg: &Config, rng: &mut Rng64) -> Result<Option<PointCloud<Reals>>> {
    let m: usize = cfg.get("fixtures.m", 2)?;
    Ok(match kind {
        "segment" => {
            let u = fixtures::random_frame(m, 1, rng).remove(0);
            let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-0.3..0.3)).collect();
            Some(fixtures::real_segment(&b, &u, cfg.req("fixtures.box_k")?, cfg.req("fixtures.k")?))
        }
        "cantor" => Some(fixtures::real_cantor_set(m, cfg.req("fixtures.depth")?)),
        _ => None,
    })
}

fn fixture_points_padic(f: Padic, kind: &str, cfg: &Config, rng: &mut Rng64) -> Result<Option<PointCloud<Padic>>> {
    let m: usize = cfg.get("fixtures.m", 2)?;
    Ok(match kind {
        "segment" => {
            let u = fixtures::random_frame_in(f, m, 1, rng).remove(0);
            let b: Vec<u64> = (0..m).map(|_| f.sample_unit(rng)).collect();
            Some(fixtures::padic_segment(f, &b, &u, cfg.req("fixtures.box_k")?, cfg.req("fixtures.k")?))
        }
        "cantor" => Some(fixtures::padic_cantor_set(f, m, cfg.req("fixtures.depth")?)),
        _ => None,
    })
}
