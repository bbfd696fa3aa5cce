use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use pigtail_core::budget::{budget_report, EfficiencyBudget};
use pigtail_core::config::AppConfig;
use pigtail_core::optics::{coupling_map, write_coupling_map_binary, write_coupling_map_csv, CouplingEngine, Grid2D};
use pigtail_core::photon::{
    fit_saturation, g2_zero, histogram_coincidences, hom_visibility, indistinguishability, photon_metrics,
    read_time_tags, read_time_tags_csv, saturation_curve, simulate_stream, stability_series, stability_stats,
    write_time_tags, ExperimentKind, StreamConfig, TimeTags, TIME_TAGS_MAGIC,
};
use pigtail_core::rig::RigSession;
use pigtail_core::service::Server;
use pigtail_core::spectra::{find_mode_dips, measure_gap, read_spectrum_csv, write_spectrum_csv};
use pigtail_core::measurement::Measurement;
use pigtail_core::Error;

use crate::{Cli, Command};

/// Process exit status per error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Exit {
    Input = 3,
    Parse = 4,
    Domain = 5,
    Config = 6,
    Bind = 7,
    Output = 8,
}

#[derive(Debug)]
pub struct Failure {
    pub kind: Exit,
    pub message: String,
}

fn fail(kind: Exit, message: impl std::fmt::Display) -> Failure {
    Failure { kind, message: message.to_string() }
}

/// Domain or format error from the core library.
fn core(e: Error) -> Failure {
    match e {
        Error::Format(_) => fail(Exit::Parse, e),
        Error::Io(_) => fail(Exit::Input, e),
        Error::Config(_) => fail(Exit::Config, e),
        _ => fail(Exit::Domain, e),
    }
}

fn domain(e: impl Into<Error>) -> Failure {
    core(e.into())
}

/// Print a line, ignoring a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        let _ = writeln!(std::io::stdout().lock(), $($arg)*);
    }};
}

type Result<T> = std::result::Result<T, Failure>;

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| fail(Exit::Input, format!("{}: {e}", path.display())))
}

struct Out {
    dir: PathBuf,
}

impl Out {
    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        let path = self.dir.join(name);
        File::create(&path).map(BufWriter::new).map_err(|e| fail(Exit::Output, format!("{}: {e}", path.display())))
    }

    fn write_with(&self, name: &str, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
        let mut w = self.create(name)?;
        f(&mut w).and_then(|_| w.flush()).map_err(|e| fail(Exit::Output, format!("{name}: {e}")))
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> Result<()> {
        self.write_with(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    }
}

fn parse_range(s: &str) -> Result<Vec<f64>> {
    let bad = || fail(Exit::Parse, format!("range `{s}` is not start:stop:step"));
    let parts: Vec<f64> = s.split(':').map(|p| p.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(step > 0.0) || b < a {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + step * i as f64).collect())
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| fail(Exit::Parse, format!("`{p}` in `{s}` is not a number"))))
        .collect()
}

pub fn run(cli: Cli) -> Result<()> {
    let cfg = AppConfig::load(cli.config.as_deref()).map_err(|e| match e {
        Error::Io(io) => fail(Exit::Config, format!("config file: {io}")),
        other => fail(Exit::Config, other),
    })?;
    let out = Out { dir: cli.out.clone() };
    if !matches!(cli.command, Command::Serve { .. } | Command::ShowConfig) {
        std::fs::create_dir_all(&out.dir).map_err(|e| fail(Exit::Output, format!("{}: {e}", out.dir.display())))?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::CouplingMap { diameters, gaps, offsets, grid_samples } => {
            coupling_map_cmd(&cfg, &out, &parse_range(&diameters)?, &parse_list(&gaps)?, &parse_range(&offsets)?, grid_samples)
        }
        Command::AlignDemo => align_demo(&cfg, &out, seed),
        Command::CooldownDemo { steps, target_k } => cooldown_demo(&cfg, &out, seed, steps, target_k),
        Command::AnalyzeSpectrum { file, temperature_k } => analyze_spectrum(&cfg, &out, &file, temperature_k),
        Command::AnalyzeTags { files } => analyze_tags(&cfg, &out, &files),
        Command::Budget { file, no_simulation } => budget(&cfg, &out, &file, no_simulation),
        Command::PhotonRun => photon_run(&cfg, &out, seed),
        Command::StabilityRun => stability_run(&cfg, &out, seed),
        Command::ShowConfig => {
            say!("{}", cfg.to_text().trim_end());
            Ok(())
        }
        Command::Serve { addr } => serve(cfg, &addr),
    }
}

fn coupling_map_cmd(cfg: &AppConfig, out: &Out, d: &[f64], g: &[f64], o: &[f64], samples: usize) -> Result<()> {
    let grid = Grid2D::square(12.0, samples).map_err(domain)?;
    let map = coupling_map(&cfg.device.pillar, &cfg.device.fiber, grid, d, g, o).map_err(domain)?;
    out.write_with("coupling_map.csv", |w| write_coupling_map_csv(&map, w))?;
    out.write_with("coupling_map.bin", |w| write_coupling_map_binary(&map, w))?;
    let zero = map.offsets.iter().position(|x| *x == 0.0);
    if let Some(o) = zero {
        say!("gap_um,best_diameter_um,efficiency");
        for (gi, gap) in map.gaps.iter().enumerate() {
            let (dia, eff) = map.best_diameter(gi, o);
            say!("{gap},{dia:.2},{eff:.4}");
        }
    }
    Ok(())
}

fn aligned_session(cfg: &AppConfig, seed: u64) -> Result<RigSession> {
    let mut s = RigSession::new(cfg.device.clone(), cfg.rig.clone(), seed).map_err(domain)?;
    s.vertical_landing().map_err(domain)?;
    Ok(s)
}

fn align_demo(cfg: &AppConfig, out: &Out, seed: u64) -> Result<()> {
    let mut s = aligned_session(cfg, seed)?;
    let report = s.auto_align().map_err(domain)?;
    out.json("alignment_report.json", &report)?;
    if report.success {
        s.secure().map_err(domain)?;
    }
    let spectrum = s.acquire_spectrum().map_err(domain)?;
    out.write_with("spectrum.csv", |w| write_spectrum_csv(&spectrum, w))?;
    out.write_with("events.ndjson", |w| s.state().event_log.write_ndjson(w))?;
    say!(
        "success={} residual_offset_um={:.4} iterations={} spectra={} phase={:?}",
        report.success,
        report.residual_offset,
        report.iterations,
        report.n_spectra_acquired,
        s.state().phase
    );
    if !report.success {
        return Err(fail(Exit::Domain, report.message.unwrap_or_else(|| "alignment failed".into())));
    }
    Ok(())
}

fn cooldown_demo(cfg: &AppConfig, out: &Out, seed: u64, steps: usize, target_k: f64) -> Result<()> {
    let mut s = aligned_session(cfg, seed)?;
    let report = s.auto_align().map_err(domain)?;
    if !report.success {
        return Err(fail(Exit::Domain, report.message.unwrap_or_else(|| "alignment failed".into())));
    }
    s.secure().map_err(domain)?;
    let frames = s.run_cooldown(target_k, steps).map_err(domain)?;
    let spectra_cfg = s.config().spectra;
    out.write_with("cooldown_spectra.csv", |w| {
        writeln!(w, "temperature_k,wavelength_nm,reflectivity")?;
        for (t, spec) in &frames {
            for (l, r) in spec.wavelengths.iter().zip(&spec.reflectivity) {
                writeln!(w, "{t:.3},{l:.4},{r:.8}")?;
            }
        }
        Ok(())
    })?;
    let mut rows = Vec::new();
    for (t, spec) in &frames {
        let gap = measure_gap(spec, &spectra_cfg).ok().map(|g| g.gap_um);
        let dips = find_mode_dips(spec, &s.expected_pillar_at(*t), &spectra_cfg);
        rows.push((*t, gap, dips));
    }
    out.write_with("cooldown_summary.csv", |w| {
        writeln!(w, "temperature_k,gap_um,mode0_nm,mode0_contrast,mode1_nm,mode1_contrast")?;
        for (t, gap, dips) in &rows {
            let gap = gap.map_or(String::new(), |g| format!("{g:.4}"));
            let cell = |i: usize| {
                dips.get(i)
                    .filter(|d| d.found)
                    .map_or(",".to_string(), |d| format!("{:.4},{:.4}", d.center_wavelength, d.contrast))
            };
            writeln!(w, "{t:.3},{gap},{},{}", cell(0), cell(1))?;
        }
        Ok(())
    })?;
    out.write_with("events.ndjson", |w| s.state().event_log.write_ndjson(w))?;
    if let Some((t, gap, dips)) = rows.last() {
        let gap = gap.map_or("none".to_string(), |g| format!("{g:.3}"));
        let l0 = dips.first().filter(|d| d.found).map_or("none".to_string(), |d| format!("{:.3}", d.center_wavelength));
        say!("temperature_k={t} gap_um={gap} fundamental_nm={l0}");
    }
    Ok(())
}

fn analyze_spectrum(cfg: &AppConfig, out: &Out, file: &Path, temperature_k: f64) -> Result<()> {
    let spectrum = read_spectrum_csv(open(file)?).map_err(core)?;
    let gap = measure_gap(&spectrum, &cfg.rig.spectra).map_err(domain)?;
    let mut pillar = cfg.device.pillar.clone();
    let shift = cfg.rig.thermal.shift_nm(temperature_k);
    pillar.mode_wavelengths.iter_mut().for_each(|l| *l -= shift);
    let dips = find_mode_dips(&spectrum, &pillar, &cfg.rig.spectra);
    let result = json!({ "gap": gap, "dips": dips });
    out.json("spectrum_analysis.json", &result)?;
    say!("{}", serde_json::to_string_pretty(&result).expect("json"));
    Ok(())
}

fn read_tags(path: &Path) -> Result<TimeTags> {
    let mut bytes = Vec::new();
    open(path)?.read_to_end(&mut bytes).map_err(|e| fail(Exit::Input, format!("{}: {e}", path.display())))?;
    let tags = if bytes.starts_with(&TIME_TAGS_MAGIC) { read_time_tags(&bytes[..]) } else { read_time_tags_csv(&bytes[..]) };
    tags.map_err(|e| match e {
        Error::Format(m) => fail(Exit::Parse, format!("{}: {m}", path.display())),
        other => core(other),
    })
}

fn analyze_tags(cfg: &AppConfig, out: &Out, files: &[PathBuf]) -> Result<()> {
    let run = &cfg.photon_run;
    let (mut g2, mut v) = (None, None);
    for f in files {
        let tags = read_tags(f)?;
        let h = histogram_coincidences(&tags, run.window_ps, run.bin_width_ps).map_err(domain)?;
        let (name, slot) = match tags.kind {
            ExperimentKind::Hbt => ("hbt", &mut g2),
            ExperimentKind::Hom => ("hom", &mut v),
        };
        if slot.is_some() {
            return Err(fail(Exit::Parse, format!("two {name} files given")));
        }
        out.write_with(&format!("{name}_histogram.csv"), |w| h.write_csv(w))?;
        *slot = Some(match tags.kind {
            ExperimentKind::Hbt => g2_zero(&h),
            ExperimentKind::Hom => hom_visibility(&h),
        }
        .map_err(domain)?);
    }
    let m = match (v, g2) {
        (Some(v), Some(g)) => Some(
            indistinguishability(
                Measurement::new(v.value.clamp(0.0, 1.0), v.sigma),
                Measurement::new(g.value.clamp(0.0, 1.0), g.sigma),
                &cfg.interferometer,
            )
            .map_err(domain)?,
        ),
        _ => None,
    };
    let result = json!({ "g2_zero": g2, "v_hom": v, "indistinguishability": m });
    out.json("tags_analysis.json", &result)?;
    say!("{}", serde_json::to_string_pretty(&result).expect("json"));
    Ok(())
}

fn budget(cfg: &AppConfig, out: &Out, file: &Path, no_simulation: bool) -> Result<()> {
    let b = EfficiencyBudget::read(BufReader::new(open(file)?)).map_err(|e| match e {
        Error::Budget(_) => fail(Exit::Parse, format!("{}: {e}", file.display())),
        other => core(other),
    })?;
    let simulated = if no_simulation {
        None
    } else {
        let pillar = &cfg.device.pillar;
        let engine = CouplingEngine::new(&cfg.device.fiber, Grid2D::default(), pillar.mode_wavelengths[0]).map_err(domain)?;
        Some(engine.efficiency(pillar, cfg.rig.cold_gap, 0.0).map_err(domain)?)
    };
    let report = budget_report(&b, simulated).map_err(domain)?;
    let text = report.render();
    out.write_with("budget_report.txt", |w| w.write_all(text.as_bytes()))?;
    say!("{}", text.trim_end());
    Ok(())
}

fn photon_run(cfg: &AppConfig, out: &Out, seed: u64) -> Result<()> {
    let src = &cfg.source;
    let run = &cfg.photon_run;
    let power = run.power.unwrap_or_else(|| src.operating_power());
    let hbt = simulate_stream(src, &StreamConfig::new(ExperimentKind::Hbt, run.pulses, power), seed).map_err(domain)?;
    let hom = simulate_stream(src, &StreamConfig::new(ExperimentKind::Hom, run.pulses, power), seed.wrapping_add(1)).map_err(domain)?;
    out.write_with("hbt.ptt", |w| write_time_tags(&hbt.tags, w).map_err(std::io::Error::other))?;
    out.write_with("hom.ptt", |w| write_time_tags(&hom.tags, w).map_err(std::io::Error::other))?;
    for (name, tags) in [("hbt", &hbt.tags), ("hom", &hom.tags)] {
        let h = histogram_coincidences(tags, run.window_ps, run.bin_width_ps).map_err(domain)?;
        out.write_with(&format!("{name}_histogram.csv"), |w| h.write_csv(w))?;
    }
    let metrics =
        photon_metrics(&hbt.tags, &hom.tags, run.pulses, &src.detector, &cfg.interferometer, run.window_ps, run.bin_width_ps)
            .map_err(domain)?;
    let powers: Vec<f64> = (1..=24).map(|i| 0.25 * i as f64 * src.saturation_power).collect();
    let curve = saturation_curve(src, &powers, 0.005, seed.wrapping_add(2));
    let fit = fit_saturation(&curve).map_err(domain)?;
    out.write_with("saturation.csv", |w| {
        writeln!(w, "power,rate_mhz")?;
        curve.iter().try_for_each(|(p, r)| writeln!(w, "{p:.6},{r:.6}"))
    })?;
    let result = json!({
        "pulses": run.pulses,
        "power": power,
        "too_short": hbt.too_short,
        "metrics": metrics,
        "saturation_fit": fit,
    });
    out.json("photon_run.json", &result)?;
    say!(
        "g2={:.5} V={:.5} M={:.5} rate_mhz={:.3} brightness={:.4} r_inf_mhz={:.3}",
        metrics.g2_zero,
        metrics.v_hom,
        metrics.indistinguishability,
        metrics.rate_mhz,
        metrics.fibered_brightness,
        fit.r_inf
    );
    Ok(())
}

fn stability_run(cfg: &AppConfig, out: &Out, seed: u64) -> Result<()> {
    let st = &cfg.stability_run;
    let rate_mean = cfg.source.expected_rate_mhz(cfg.photon_run.power.unwrap_or_else(|| cfg.source.operating_power()));
    let rate = stability_series(st.samples, st.hours, rate_mean, st.rate_relative_std, st.correlation, 0.0, seed);
    let m_mean = cfg.source.intrinsic_indistinguishability;
    let m = stability_series(st.samples, st.hours, m_mean, st.indistinguishability_relative_std, st.correlation, 0.0, seed.wrapping_add(1));
    out.write_with("stability.csv", |w| {
        writeln!(w, "time_h,rate_mhz,indistinguishability")?;
        rate.iter().zip(&m).try_for_each(|((t, r), (_, v))| writeln!(w, "{t:.6},{r:.6},{v:.6}"))
    })?;
    let rs = stability_stats(&rate).map_err(domain)?;
    let ms = stability_stats(&m).map_err(domain)?;
    out.json("stability.json", &json!({ "rate": rs, "indistinguishability": ms }))?;
    say!("rate_relative_std={:.4} indistinguishability_relative_std={:.4}", rs.relative_std, ms.relative_std);
    Ok(())
}

fn serve(cfg: AppConfig, addr: &str) -> Result<()> {
    let server = Server::bind(addr, cfg).map_err(|e| fail(Exit::Bind, format!("{addr}: {e}")))?;
    server.warm_up().map_err(|e| fail(Exit::Domain, e))?;
    let local = server.local_addr().map_err(|e| fail(Exit::Bind, e))?;
    say!("listening on {local}");
    server.run().map_err(|e| fail(Exit::Bind, e))
}
