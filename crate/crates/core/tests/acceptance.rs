//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Criteria 1-5 and 7-9 are exact or tolerance checks and fail the run.
//! Criterion 6 is the synthetic ordering study; its verdict is reported but
//! does not fail the run. Set `MYO_SKIP_STUDY=1` to skip 6 and 8, and
//! `MYO_ACCEPTANCE_OUT=<dir>` to keep the study output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use myocontrol::analysis::{balanced_latin_square, benjamini_yekutieli, rm_anova, sweep_rejection, total_error_rate};
use myocontrol::control::{reject, ControlCommand, PcMap, RejectionConfig};
use myocontrol::dataset::{MotionClass, SynthProfile};
use myocontrol::dsp::{design_notch, FilterChain, FilterSpec, FrameSpec};
use myocontrol::experiment::{self, read_manifest, ClassifierKind, ExperimentConfig};
use myocontrol::features::{l_scale, mav, mfl, msr, wamp, FeatureConfig};
use myocontrol::fitts::{
    compute_metrics, instability, run_fitts, scored, step, AllNm, CursorState, Driver, EmgDriver, EnvState,
    FittsConfig, FittsTrialLog, Persona, Target, TickRecord, TrialStatus,
};
use myocontrol::models::gradcheck::{xent_grad_check, GradCheckReport};
use myocontrol::models::Decision;
use myocontrol::ssl::{vicreg_grad_check, vicreg_loss, VicregConfig};

const FS: f64 = 2000.0;

type Verdict = Result<(bool, String), String>;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn within(elapsed: f64, budget: f64) -> (bool, String) {
    (elapsed < budget, format!("{elapsed:.2} s of {budget} s"))
}

fn criterion_1() -> Verdict {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC1);
    let mut worst: BTreeMap<&str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, e: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..1000 {
        let n = if rng.gen_bool(0.5) { 324 } else { rng.gen_range(2..=500) };
        let scale = 10f64.powf(rng.gen_range(-3.0..1.0));
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0) * scale).collect();
        let thr = rng.gen_range(0.0..1.0) * scale;

        let mut pairs = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                pairs += (x[i] - x[j]).abs();
            }
        }
        let pair_count = (n * (n - 1) / 2) as f64;
        note("l_scale", rel_err(l_scale(&x).map_err(|e| e.to_string())?, 0.5 * pairs / pair_count));

        let mut diff_sq = 0.0;
        let mut crossings = 0usize;
        for i in 1..n {
            let d = x[i] - x[i - 1];
            diff_sq += d * d;
            if d.abs() > thr {
                crossings += 1;
            }
        }
        note("mfl", rel_err(mfl(&x).map_err(|e| e.to_string())?, diff_sq.sqrt().log10()));
        note("wamp", rel_err(wamp(&x, thr) as f64, crossings as f64));

        let mut root = 0.0;
        let mut abs = 0.0;
        for v in &x {
            root += v.abs().sqrt();
            abs += v.abs();
        }
        note("msr", rel_err(msr(&x).map_err(|e| e.to_string())?, root / n as f64));
        note("mav", rel_err(mav(&x).map_err(|e| e.to_string())?, abs / n as f64));
    }
    let elapsed = t0.elapsed().as_secs_f64();
    let ok = worst.values().all(|&e| e <= 1e-10);
    let (fast, timing) = within(elapsed, 10.0);
    let detail = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect::<Vec<_>>().join(", ");
    Ok((ok && fast, format!("1000 windows, max rel err {detail}; {timing}")))
}

fn sine(freq: f64, n: usize) -> Array1<f64> {
    Array1::from_iter((0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / FS).sin()))
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn chain_apply(chain: &FilterChain, x: &Array1<f64>) -> Result<Array1<f64>, String> {
    let sig = x.clone().insert_axis(ndarray::Axis(0));
    Ok(chain.apply(sig.view()).map_err(|e| e.to_string())?.row(0).to_owned())
}

fn criterion_2() -> Verdict {
    let t0 = Instant::now();
    let spec = FilterSpec::default();
    let n = 20_000;
    let inner = 2000..18_000;

    let notch = design_notch(spec.notch_freq, spec.notch_bandwidth, FS).map_err(|e| e.to_string())?;
    let x = sine(60.0, n);
    let y = notch.filtfilt(x.view()).map_err(|e| e.to_string())?;
    let notch_db = 20.0 * (rms(&x.as_slice().unwrap()[inner.clone()]) / rms(&y.as_slice().unwrap()[inner.clone()])).log10();

    let chain = FilterChain::new(&spec, FS).map_err(|e| e.to_string())?;
    let x = sine(235.0, n);
    let y = chain_apply(&chain, &x)?;
    let pass_db = 20.0 * (rms(&x.as_slice().unwrap()[inner.clone()]) / rms(&y.as_slice().unwrap()[inner])).log10();

    // long enough for the notch ringing to die out before the edges
    let center = 10_000;
    let pulse = Array1::from_iter((0..=2 * center).map(|i| {
        let d = i as f64 - center as f64;
        (-d * d / 50.0).exp()
    }));
    let y = chain_apply(&chain, &pulse)?;
    let asym = (1..center).map(|k| (y[center - k] - y[center + k]).abs()).fold(0.0, f64::max);

    let (fast, timing) = within(t0.elapsed().as_secs_f64(), 5.0);
    let ok = notch_db >= 30.0 && pass_db <= 0.5 && asym <= 1e-9;
    Ok((
        ok && fast,
        format!("60 Hz attenuation {notch_db:.1} dB, 235 Hz loss {pass_db:.3} dB, max asymmetry {asym:.1e}; {timing}"),
    ))
}

fn criterion_3() -> Verdict {
    let t0 = Instant::now();
    let xent = xent_grad_check(8, 250, 0xACC3).map_err(|e| e.to_string())?;
    let vic = vicreg_grad_check(8, false, 250, 0xACC3).map_err(|e| e.to_string())?;
    let good = |r: &GradCheckReport| r.checked >= 200 && r.max_rel_error < 1e-4;
    let (fast, timing) = within(t0.elapsed().as_secs_f64(), 60.0);
    Ok((
        good(&xent) && good(&vic) && fast,
        format!(
            "XEnt {} params max rel {:.1e}, VICReg {} params max rel {:.1e}; {timing}",
            xent.checked, xent.max_rel_error, vic.checked, vic.max_rel_error
        ),
    ))
}

fn criterion_4() -> Verdict {
    let cfg = VicregConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACC4);
    let z = Array2::from_shape_simple_fn((32, 16), || rng.gen_range(-2.0..2.0));
    let inv = vicreg_loss(&z, &z, &cfg).map_err(|e| e.to_string())?.invariance;

    // columns rescaled to unit sample standard deviation
    let mut unit = Array2::from_shape_simple_fn((64, 16), || rng.gen_range(-1.0..1.0));
    for mut col in unit.columns_mut() {
        let m = col.mean().unwrap();
        col.mapv_inplace(|v| v - m);
        let sd = (col.iter().map(|v| v * v).sum::<f64>() / 63.0).sqrt();
        col.mapv_inplace(|v| v / sd);
    }
    let var = vicreg_loss(&unit, &unit, &cfg).map_err(|e| e.to_string())?.variance;

    // one branch with Cov = [[2, 2], [2, 2]], the other without off-diagonal covariance
    let z = array![[1.0, 1.0], [-1.0, -1.0]];
    let zp = array![[1.0, 0.0], [-1.0, 0.0]];
    let cov = vicreg_loss(&z, &zp, &cfg).map_err(|e| e.to_string())?.covariance;
    let both = vicreg_loss(&z, &z, &cfg).map_err(|e| e.to_string())?.covariance;

    let ok = inv == 0.0 && var.abs() <= 1e-3 && (cov - 4.0).abs() <= 1e-12 && (both - 8.0).abs() <= 1e-12;
    Ok((ok, format!("invariance {inv}, unit-spread variance {var:.1e}, covariance per branch {cov} (both branches {both})")))
}

fn straight_log(cfg: &FittsConfig) -> Result<FittsTrialLog, String> {
    let target = Target { sphere_point: [1.0, 0.0, 0.0], x: 400.0, y: 100.0, diameter: 100.0, width: cfg.width };
    let start = CursorState { x: 100.0, y: 100.0, diameter: 100.0 };
    let gains = cfg.gains().map_err(|e| e.to_string())?;
    let mut s = EnvState::new(start, target);
    let mut records = Vec::new();
    while s.status == TrialStatus::Running {
        let cmd = if target.position_ok(&s.cursor) {
            ControlCommand::idle()
        } else {
            ControlCommand { class: MotionClass::WF, velocity: 1.0, rejected: false }
        };
        s = step(&s, &cmd, cfg, &gains);
        records.push(TickRecord {
            trial: 0,
            tick: s.tick,
            time: s.tick as f64 * cfg.tick,
            x: s.cursor.x,
            y: s.cursor.y,
            diameter: s.cursor.diameter,
            intent: cmd.class,
            intensity: cmd.velocity,
            raw_class: cmd.class,
            confidence: 1.0,
            class: cmd.class,
            velocity: cmd.velocity,
            rejected: false,
            in_position: target.position_ok(&s.cursor),
            in_size: target.size_ok(&s.cursor),
            dwell: s.dwell,
        });
    }
    Ok(FittsTrialLog {
        index: 0,
        scored: true,
        target,
        start,
        acquire_time: s.tick as f64 * cfg.tick,
        records,
        outcome: s.status,
    })
}

fn criterion_5() -> Verdict {
    use MotionClass::*;
    let cfg = FittsConfig::default();
    let id = cfg.index_of_difficulty();

    let log = straight_log(&cfg)?;
    let ideal = compute_metrics(&[log.clone()], &cfg).map_err(|e| e.to_string())?;
    let ideal_ok = log.success()
        && (ideal.path_efficiency - 1.0).abs() < 1e-12
        && ideal.overshoots == 0.0
        && ideal.stopping_distance == 0.0;

    let short = FittsConfig { targets_total: 3, targets_scored: 2, ..Default::default() };
    let profile = SynthProfile::default();
    let map = PcMap { bounds: Vec::new(), a: 10.0, x0: 0.5, label_fallback: Vec::new() };
    let mut stub = AllNm;
    let mut driver = Driver::Emg(EmgDriver {
        classifier: &mut stub,
        pc_map: &map,
        rejection: RejectionConfig::default(),
        features: FeatureConfig { wamp_threshold: 0.01 },
        filter: FilterSpec::default(),
        frame: FrameSpec::default(),
        profile: &profile,
    });
    let logs = run_fitts(&mut driver, &short, &Persona::default(), 1).map_err(|e| e.to_string())?;
    let timed_out = compute_metrics(&scored(&logs), &short).map_err(|e| e.to_string())?;
    let mut mixed = log.clone();
    mixed.outcome = TrialStatus::Timeout;
    mixed.acquire_time = short.timeout;
    let half = compute_metrics(&[log.clone(), mixed], &cfg).map_err(|e| e.to_string())?;
    let timeout_ok = timed_out.completion_rate == 0.0
        && timed_out.movement_time == 13.0
        && logs.iter().all(|l| l.acquire_time == 13.0)
        && (half.movement_time - (log.acquire_time + 13.0) / 2.0).abs() < 1e-12;

    let traces: [(&[MotionClass], f64); 4] =
        [(&[WF, WF, WE, WF, WF], 2.0), (&[WF, NM, WF, WF], 0.0), (&[], 0.0), (&[WF, WE, WE, WP, WP], 1.0)];
    let trace_ok = traces.iter().all(|(t, v)| instability(t) == *v);

    let ok = (id - 3.09).abs() <= 0.005 && ideal_ok && timeout_ok && trace_ok;
    Ok((
        ok,
        format!(
            "ID {id:.4} bits; ideal path efficiency {:.3}, overshoots {}, stopping {}; timeout movement time {} s; instability traces {}",
            ideal.path_efficiency,
            ideal.overshoots,
            ideal.stopping_distance,
            timed_out.movement_time,
            if trace_ok { "exact" } else { "mismatch" }
        ),
    ))
}

fn criterion_7() -> Verdict {
    let data = array![[10.0, 12.0, 14.0], [8.0, 11.0, 12.0], [9.0, 9.0, 13.0], [7.0, 10.0, 11.0]];
    let r = rm_anova(data.view()).map_err(|e| e.to_string())?;
    let table_ok = (r.f - 24.0).abs() <= 1e-6
        && (r.ss_conditions - 32.0).abs() <= 1e-6
        && (r.ss_subjects - 11.0).abs() <= 1e-6
        && (r.ss_error - 4.0).abs() <= 1e-6
        && r.df == (2.0, 6.0);

    let p = [0.01, 0.04, 0.03, 0.2];
    let adj = benjamini_yekutieli(&p).map_err(|e| e.to_string())?;
    let c4: f64 = (1..=4).map(|i| 1.0 / i as f64).sum();
    let mut order: Vec<usize> = (0..4).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut direct = [0.0; 4];
    let mut running: f64 = 1.0;
    for rank in (0..4).rev() {
        let i = order[rank];
        running = running.min(p[i] * 4.0 * c4 / (rank + 1) as f64);
        direct[i] = running.min(1.0);
    }
    let by_ok = adj.iter().zip(direct).all(|(a, d)| (a - d).abs() < 1e-12) && (adj[0] - 0.0833).abs() < 5e-5;

    let sq = balanced_latin_square(5).map_err(|e| e.to_string())?;
    let mut columns_ok = sq.len() == 10;
    for col in 0..5 {
        let mut counts = [0; 5];
        for row in &sq {
            counts[row[col]] += 1;
        }
        columns_ok &= counts == [2; 5];
    }
    let mut carry = [[0; 5]; 5];
    for row in &sq {
        for w in row.windows(2) {
            carry[w[0]][w[1]] += 1;
        }
    }
    let carry_ok = (0..5).all(|a| (0..5).all(|b| carry[a][b] == if a == b { 0 } else { 2 }));

    Ok((
        table_ok && by_ok && columns_ok && carry_ok,
        format!(
            "F {:.6} (oracle 24), BY first step {:.4}, Latin square columns {} carryover {}",
            r.f,
            adj[0],
            if columns_ok { "balanced" } else { "unbalanced" },
            if carry_ok { "uniform" } else { "non-uniform" }
        ),
    ))
}

fn read_decisions(path: &Path) -> Result<(Vec<Decision>, Vec<MotionClass>), String> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| e.to_string())?;
    let headers = rdr.headers().map_err(|e| e.to_string())?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or(format!("no column {name}"));
    let (label, raw, conf) = (col("label")?, col("raw_class")?, col("confidence")?);
    let mut decisions = Vec::new();
    let mut labels = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| e.to_string())?;
        let class: MotionClass = rec[raw].parse().map_err(|e: myocontrol::Error| e.to_string())?;
        let confidence: f64 = rec[conf].parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
        let mut posterior = [(1.0 - confidence) / 6.0; 7];
        posterior[class.index()] = confidence;
        decisions.push(Decision { class, confidence, posterior });
        labels.push(rec[label].parse().map_err(|e: myocontrol::Error| e.to_string())?);
    }
    Ok((decisions, labels))
}

fn criterion_9() -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig { n_virtual_subjects: 1, roster: vec![ClassifierKind::LdaR], ..Default::default() };
    experiment::cmd_generate(&cfg, tmp.path()).map_err(|e| e.to_string())?;
    experiment::cmd_train(&cfg, tmp.path()).map_err(|e| e.to_string())?;
    experiment::cmd_offline(&cfg, tmp.path()).map_err(|e| e.to_string())?;
    let (decisions, labels) = read_decisions(&tmp.path().join("subject_00/offline/lda_r_decisions.csv"))?;

    let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
    let curve = sweep_rejection(&decisions, &labels, &thresholds).map_err(|e| e.to_string())?;
    let raw: Vec<MotionClass> = decisions.iter().map(|d| d.class).collect();
    let plain = total_error_rate(&raw, &labels).map_err(|e| e.to_string())?;
    let zero = RejectionConfig { threshold: 0.0 };
    let identity = curve[0].total_error_rate == plain && decisions.iter().all(|d| reject(d, &zero).class == d.class);

    let active = labels.iter().filter(|&&l| l != MotionClass::NM).count() as f64 / labels.len() as f64;
    let one = RejectionConfig { threshold: 1.0 };
    let saturation = curve[20].total_error_rate == active && decisions.iter().all(|d| reject(d, &one).rejected);

    let mut nested = true;
    for w in thresholds.windows(2) {
        let (lo, hi) = (RejectionConfig { threshold: w[0] }, RejectionConfig { threshold: w[1] });
        nested &= decisions.iter().all(|d| !reject(d, &lo).rejected || reject(d, &hi).rejected);
    }
    Ok((
        identity && saturation && nested,
        format!(
            "{} recorded LDA-R decisions; error {plain:.4} at 0, {:.4} at 1 (active fraction {active:.4}); nesting {}",
            decisions.len(),
            curve[20].total_error_rate,
            if nested { "holds" } else { "broken" }
        ),
    ))
}

struct Study {
    out: PathBuf,
    verdict: Verdict,
}

fn criterion_6(out: &Path) -> Verdict {
    let cfg = ExperimentConfig::default();
    let t0 = Instant::now();
    let e = |e: myocontrol::Error| e.to_string();
    experiment::cmd_generate(&cfg, out).map_err(e)?;
    experiment::cmd_train(&cfg, out).map_err(e)?;
    let offline = experiment::cmd_offline(&cfg, out).map_err(e)?;
    let fitts = experiment::cmd_fitts(&cfg, out).map_err(e)?;
    experiment::cmd_stats(&cfg, out).map_err(e)?;
    experiment::cmd_latent(&cfg, out).map_err(e)?;
    let elapsed = t0.elapsed().as_secs_f64();

    let n = cfg.n_virtual_subjects;
    let oracle_ok = fitts.iter().all(|s| s.oracle.completion_rate == 1.0) && fitts.len() == n;
    let mut calmer = 0;
    for s in &fitts {
        let inst = |k: ClassifierKind| s.metrics.iter().find(|(c, _)| *c == k).map(|(_, m)| m.instability);
        if let (Some(base), Some(d), Some(v)) = (inst(ClassifierKind::LdaR), inst(ClassifierKind::LstmD), inst(ClassifierKind::LstmV)) {
            if d < base && v < base {
                calmer += 1;
            }
        }
    }
    let mut lower_ter = 0;
    for (_, reports) in &offline {
        let ter = |k: ClassifierKind| reports.iter().find(|r| r.classifier == k.name()).map(|r| r.total_error_rate);
        if let (Some(base), Some(v)) = (ter(ClassifierKind::LdaR), ter(ClassifierKind::LstmV)) {
            if v <= base {
                lower_ter += 1;
            }
        }
    }
    let ok = oracle_ok && calmer >= 9 && lower_ter >= 8 && elapsed <= 1800.0;
    Ok((
        ok,
        format!(
            "(a) oracle completion 100% in all {n} subjects: {}; (b) LSTM-D and LSTM-V below LDA-R instability in {calmer}/{n} (need 9); \
             (c) LSTM-V TER <= LDA-R in {lower_ter}/{n} (need 8); wall time {:.0} s of 1800 s",
            if oracle_ok { "yes" } else { "no" },
            elapsed
        ),
    ))
}

fn subject_rows(path: &Path, subject: usize) -> Result<Vec<String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let key = subject.to_string();
    let mut rows: Vec<String> = lines.filter(|l| l.split(',').next() == Some(key.as_str())).map(str::to_owned).collect();
    rows.insert(0, header.to_owned());
    Ok(rows)
}

/// Reruns subject 0 with identical seeds and compares its files with the study.
fn criterion_8(study: &Path) -> Verdict {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig { n_virtual_subjects: 1, ..Default::default() };
    experiment::run_all(&cfg, tmp.path()).map_err(|e| e.to_string())?;
    let prefix = "subject_00/";
    let pick = |dir: &Path| -> Result<BTreeMap<String, String>, String> {
        let m = read_manifest(dir).map_err(|e| e.to_string())?;
        Ok(m.files.into_iter().filter(|(p, _)| p.starts_with(prefix)).collect())
    };
    let (a, b) = (pick(study)?, pick(tmp.path())?);
    let count = |sub: &str| a.keys().filter(|p| p.starts_with(&format!("{prefix}{sub}/"))).count();
    let mismatched: Vec<&String> = a.keys().chain(b.keys()).filter(|p| a.get(*p) != b.get(*p)).collect();
    let mut csv_ok = true;
    for name in ["metrics.csv", "offline.csv", "oracle_metrics.csv"] {
        csv_ok &= subject_rows(&study.join(name), 0)? == subject_rows(&tmp.path().join(name), 0)?;
    }
    let ok = mismatched.is_empty() && csv_ok && count("sessions") > 0 && count("models") > 0 && count("fitts") > 0;
    Ok((
        ok,
        format!(
            "{} subject-0 files ({} sessions, {} models, {} fitts), {} hash mismatches; metric CSV rows {}",
            a.len(),
            count("sessions"),
            count("models"),
            count("fitts"),
            mismatched.len(),
            if csv_ok { "identical" } else { "differ" }
        ),
    ))
}

fn main() {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).try_init();
    let skip_study = std::env::var_os("MYO_SKIP_STUDY").is_some_and(|v| v != "0");
    let mut hard_failures = Vec::new();
    let mut print = |n: usize, title: &str, hard: bool, verdict: Verdict| {
        let (tag, detail) = match verdict {
            Ok((true, d)) => ("PASS", d),
            Ok((false, d)) => ("FAIL", d),
            Err(e) => ("FAIL", format!("error: {e}")),
        };
        println!("criterion {n} [{title}]: {tag}: {detail}");
        if tag == "FAIL" && hard {
            hard_failures.push(n);
        }
    };

    print(1, "feature oracles", true, criterion_1());
    print(2, "filters", true, criterion_2());
    print(3, "gradient checks", true, criterion_3());
    print(4, "VICReg identities", true, criterion_4());
    print(5, "Fitts environment", true, criterion_5());

    let study = if skip_study {
        println!("criterion 6 [synthetic ordering study]: SKIP");
        None
    } else {
        let keep = std::env::var_os("MYO_ACCEPTANCE_OUT").map(PathBuf::from);
        let tmp = tempfile::tempdir().expect("temporary directory");
        let out = keep.unwrap_or_else(|| tmp.path().to_path_buf());
        let verdict = criterion_6(&out);
        Some((Study { out, verdict }, tmp))
    };
    if let Some((s, _)) = &study {
        print(6, "synthetic ordering study", false, s.verdict.clone());
    }

    print(7, "statistics", true, criterion_7());

    match &study {
        Some((s, _)) if s.verdict.is_ok() => print(8, "determinism", true, criterion_8(&s.out)),
        Some(_) => print(8, "determinism", true, Err("study did not complete".into())),
        None => println!("criterion 8 [determinism]: SKIP"),
    }

    print(9, "rejection semantics", true, criterion_9());

    if !hard_failures.is_empty() {
        eprintln!("failed criteria: {hard_failures:?}");
        std::process::exit(1);
    }
}
