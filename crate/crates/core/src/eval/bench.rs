//! Oracle benchmark over synthetic two-plane scenes.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{render, RenderMode, RenderRequest};
use crate::imgcore::{DisparityMap, RenderParams};
use crate::neuralpipe::{CoreConfig, NrMode};
use crate::oracle::{render_oracle, TwoPlaneScene, DEFAULT_SAMPLES};
use crate::par;

use super::corrupt::{corrupt_disparity, CorruptionKind};
use super::metrics::{psnr, ssim};

/// Blur parameter for benchmark level `level`: `K = 10 · level`.
pub fn level_blur(level: u32) -> f64 {
    10.0 * level as f64
}

/// A renderer configuration under test.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Render(RenderModeKey),
    /// Pipeline alone in one of its ablation presets.
    Ablation(NrModeKey),
}

/// Orderable stand-ins so [`Method`] can key sorted maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RenderModeKey {
    Hybrid,
    ClassicalOnly,
    NeuralOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NrModeKey {
    Full,
    Sfuse,
    Clip,
    Noclip,
    Bilinear,
}

impl Method {
    pub const HYBRID: Method = Method::Render(RenderModeKey::Hybrid);
    pub const CLASSICAL: Method = Method::Render(RenderModeKey::ClassicalOnly);
    pub const NEURAL: Method = Method::Render(RenderModeKey::NeuralOnly);

    pub fn from_mode(mode: RenderMode) -> Method {
        Method::Render(match mode {
            RenderMode::Hybrid => RenderModeKey::Hybrid,
            RenderMode::ClassicalOnly => RenderModeKey::ClassicalOnly,
            RenderMode::NeuralOnly => RenderModeKey::NeuralOnly,
        })
    }

    pub fn ablation(mode: NrMode) -> Method {
        Method::Ablation(match mode {
            NrMode::Full => NrModeKey::Full,
            NrMode::Sfuse => NrModeKey::Sfuse,
            NrMode::Clip => NrModeKey::Clip,
            NrMode::Noclip => NrModeKey::Noclip,
            NrMode::Bilinear => NrModeKey::Bilinear,
        })
    }

    fn render_mode(self) -> RenderMode {
        match self {
            Method::Render(RenderModeKey::Hybrid) => RenderMode::Hybrid,
            Method::Render(RenderModeKey::ClassicalOnly) => RenderMode::ClassicalOnly,
            Method::Render(RenderModeKey::NeuralOnly) | Method::Ablation(_) => RenderMode::NeuralOnly,
        }
    }

    fn nr_mode(self) -> NrMode {
        match self {
            Method::Ablation(k) => match k {
                NrModeKey::Full => NrMode::Full,
                NrModeKey::Sfuse => NrMode::Sfuse,
                NrModeKey::Clip => NrMode::Clip,
                NrModeKey::Noclip => NrMode::Noclip,
                NrModeKey::Bilinear => NrMode::Bilinear,
            },
            Method::Render(_) => NrMode::Full,
        }
    }

    pub fn name(self) -> String {
        match self {
            Method::Render(_) => self.render_mode().as_str().to_string(),
            Method::Ablation(_) => format!("nr_{}", self.nr_mode()),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(rest) = s.strip_prefix("nr_") {
            return Ok(Method::ablation(rest.parse()?));
        }
        Ok(Method::from_mode(s.parse()?))
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which plane the benchmark focuses on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FocusPolicy {
    Background,
    Foreground,
    Fixed(f64),
}

impl FocusPolicy {
    fn focus(self, scene: &TwoPlaneScene) -> f64 {
        match self {
            FocusPolicy::Background => scene.d_bg(),
            FocusPolicy::Foreground => scene.d_fg(),
            FocusPolicy::Fixed(f) => f,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchOptions {
    pub focus: FocusPolicy,
    pub gamma: f64,
    pub samples: usize,
    /// Base pipeline settings; ablation methods override the mode flags.
    pub cfg: CoreConfig,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            focus: FocusPolicy::Background,
            gamma: 2.2,
            samples: DEFAULT_SAMPLES,
            cfg: CoreConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionTag {
    pub kind: CorruptionKind,
    pub level: u32,
}

/// One `(scene, method, level)` measurement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub scene: usize,
    pub method: Method,
    pub level: u32,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionTag>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub level: u32,
    pub psnr: f64,
    pub ssim: f64,
    pub seconds: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSummary {
    pub method: Method,
    pub kind: CorruptionKind,
    pub level: u32,
    pub psnr: f64,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
}

fn mean(v: impl Iterator<Item = f64>) -> (f64, usize) {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (if n == 0 { f64::NAN } else { s / n as f64 }, n)
}

impl BenchmarkReport {
    pub fn merge(&mut self, other: BenchmarkReport) {
        self.rows.extend(other.rows);
    }

    /// Means over clean (uncorrupted) rows, per method and level.
    pub fn summaries(&self) -> Vec<MethodSummary> {
        let mut groups: BTreeMap<(Method, u32), Vec<&BenchRow>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.corruption.is_none()) {
            groups.entry((r.method, r.level)).or_default().push(r);
        }
        groups
            .into_iter()
            .map(|((method, level), rows)| MethodSummary {
                method,
                level,
                psnr: mean(rows.iter().map(|r| r.psnr)).0,
                ssim: mean(rows.iter().map(|r| r.ssim)).0,
                seconds: mean(rows.iter().map(|r| r.seconds)).0,
                count: rows.len(),
            })
            .collect()
    }

    pub fn summary(&self, method: Method, level: u32) -> Option<MethodSummary> {
        self.summaries().into_iter().find(|s| s.method == method && s.level == level)
    }

    /// Mean PSNR per method, corruption kind and corruption level.
    pub fn corruption_summaries(&self) -> Vec<CorruptionSummary> {
        let mut groups: BTreeMap<(Method, u8, u32), (CorruptionKind, Vec<f64>)> = BTreeMap::new();
        for r in &self.rows {
            if let Some(c) = r.corruption {
                groups
                    .entry((r.method, c.kind as u8, c.level))
                    .or_insert_with(|| (c.kind, Vec::new()))
                    .1
                    .push(r.psnr);
            }
        }
        groups
            .into_iter()
            .map(|((method, _, level), (kind, v))| {
                let (psnr, count) = mean(v.into_iter());
                CorruptionSummary {
                    method,
                    kind,
                    level,
                    psnr,
                    count,
                }
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            rows: &'a [BenchRow],
            summary: Vec<MethodSummary>,
            corruption: Vec<CorruptionSummary>,
        }
        serde_json::to_string_pretty(&Doc {
            rows: &self.rows,
            summary: self.summaries(),
            corruption: self.corruption_summaries(),
        })
        .expect("report serializes")
    }

    /// Aligned table: one row per method, PSNR / SSIM / seconds per level,
    /// then the corruption means if any.
    pub fn to_table(&self) -> String {
        let sums = self.summaries();
        let mut levels: Vec<u32> = sums.iter().map(|s| s.level).collect();
        levels.sort_unstable();
        levels.dedup();
        let mut methods: Vec<Method> = sums.iter().map(|s| s.method).collect();
        methods.dedup();
        let mut out = String::new();
        if !sums.is_empty() {
            let _ = write!(out, "{:<16}", "method");
            for l in &levels {
                let _ = write!(out, " | {:^26}", format!("level {l} (K={})", level_blur(*l)));
            }
            out.push('\n');
            let _ = write!(out, "{:<16}", "");
            for _ in &levels {
                let _ = write!(out, " | {:>8} {:>8} {:>8}", "PSNR", "SSIM", "time/s");
            }
            out.push('\n');
            for m in &methods {
                let _ = write!(out, "{:<16}", m.name());
                for l in &levels {
                    match sums.iter().find(|s| s.method == *m && s.level == *l) {
                        Some(s) => {
                            let _ = write!(out, " | {:>8.2} {:>8.4} {:>8.3}", s.psnr, s.ssim, s.seconds);
                        }
                        None => {
                            let _ = write!(out, " | {:>8} {:>8} {:>8}", "-", "-", "-");
                        }
                    }
                }
                out.push('\n');
            }
        }
        let corr = self.corruption_summaries();
        if !corr.is_empty() {
            out.push('\n');
            let _ = writeln!(out, "{:<16} {:<8} {:>5} {:>8}", "method", "kind", "level", "PSNR");
            for c in corr {
                let _ = writeln!(out, "{:<16} {:<8} {:>5} {:>8.2}", c.method.name(), c.kind.as_str(), c.level, c.psnr);
            }
        }
        out
    }

    /// Writes `report.json` and `report.txt` into `dir`.
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json = dir.join("report.json");
        fs::write(&json, self.to_json()).map_err(|e| Error::io(&json, e))?;
        let txt = dir.join("report.txt");
        fs::write(&txt, self.to_table()).map_err(|e| Error::io(&txt, e))?;
        Ok(())
    }
}

fn measure(
    scene_id: usize,
    scene: &TwoPlaneScene,
    disparity: DisparityMap,
    method: Method,
    level: u32,
    truth: &crate::imgcore::ImageBuffer,
    params: RenderParams,
    opts: &BenchOptions,
    corruption: Option<CorruptionTag>,
) -> Result<BenchRow> {
    let mut cfg = CoreConfig::for_mode(method.nr_mode());
    cfg.r_hat = opts.cfg.r_hat;
    cfg.errormap = opts.cfg.errormap;
    let req = RenderRequest::new(scene.composite(), disparity, params)
        .with_mode(method.render_mode())
        .with_config(cfg);
    let start = Instant::now();
    let out = render(&req)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(BenchRow {
        scene: scene_id,
        method,
        level,
        psnr: psnr(&out.image, truth)?,
        ssim: ssim(&out.image, truth)?,
        seconds,
        corruption,
    })
}

fn params_for(scene: &TwoPlaneScene, level: u32, opts: &BenchOptions) -> RenderParams {
    RenderParams::new(level_blur(level), opts.focus.focus(scene), opts.gamma)
}

/// Renders every `(scene, method, level)` and scores it against the oracle.
pub fn run_benchmark(
    scenes: &[TwoPlaneScene],
    methods: &[Method],
    levels: &[u32],
    opts: &BenchOptions,
) -> Result<BenchmarkReport> {
    for &l in levels {
        params_for(&scenes[0], l, opts).validate()?;
    }
    let per_scene = par::map_range(scenes.len(), |i| -> Result<Vec<BenchRow>> {
        let scene = &scenes[i];
        let mut rows = Vec::new();
        for &level in levels {
            let params = params_for(scene, level, opts);
            let truth = render_oracle(scene, &params, opts.samples);
            for &m in methods {
                rows.push(measure(i, scene, scene.disparity(), m, level, &truth, params, opts, None)?);
            }
        }
        Ok(rows)
    });
    let mut report = BenchmarkReport::default();
    for rows in per_scene {
        report.rows.extend(rows?);
    }
    Ok(report)
}

/// Renders from corrupted disparity maps at a fixed blur level and scores
/// against the oracle of the clean scene.
pub fn run_corruption(
    scenes: &[TwoPlaneScene],
    methods: &[Method],
    kinds: &[CorruptionKind],
    corruption_levels: &[u32],
    level: u32,
    opts: &BenchOptions,
) -> Result<BenchmarkReport> {
    let per_scene = par::map_range(scenes.len(), |i| -> Result<Vec<BenchRow>> {
        let scene = &scenes[i];
        let params = params_for(scene, level, opts);
        params.validate()?;
        let truth = render_oracle(scene, &params, opts.samples);
        let clean = scene.disparity();
        let mut rows = Vec::new();
        for &kind in kinds {
            for &cl in corruption_levels {
                let d = corrupt_disparity(&clean, kind, cl)?;
                for &m in methods {
                    let tag = Some(CorruptionTag { kind, level: cl });
                    rows.push(measure(i, scene, d.clone(), m, level, &truth, params, opts, tag)?);
                }
            }
        }
        Ok(rows)
    });
    let mut report = BenchmarkReport::default();
    for rows in per_scene {
        report.rows.extend(rows?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::generate_scene;

    fn quick() -> BenchOptions {
        BenchOptions {
            samples: 64,
            ..BenchOptions::default()
        }
    }

    #[test]
    fn one_of_each_gives_one_row() {
        let scenes = vec![generate_scene(0, 48, 48)];
        let r = run_benchmark(&scenes, &[Method::HYBRID], &[1], &quick()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].level, 1);
        assert!(r.rows[0].psnr > 20.0);
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let row = &json["rows"][0];
        for key in ["scene", "method", "level", "psnr", "ssim", "seconds"] {
            assert!(!row[key].is_null(), "{key}");
        }
        assert_eq!(row["method"], "hybrid");
        assert!(r.to_table().contains("hybrid"));
    }

    #[test]
    fn report_files_written() {
        let scenes = vec![generate_scene(1, 40, 40)];
        let mut r = run_benchmark(&scenes, &[Method::CLASSICAL, Method::ablation(NrMode::Clip)], &[1, 2], &quick()).unwrap();
        r.merge(run_corruption(&scenes, &[Method::HYBRID], &[CorruptionKind::Blur], &[1, 2], 2, &quick()).unwrap());
        assert_eq!(r.summaries().len(), 4);
        assert_eq!(r.corruption_summaries().len(), 2);
        let dir = tempfile::tempdir().unwrap();
        r.write(dir.path()).unwrap();
        assert!(dir.path().join("report.json").exists());
        let table = fs::read_to_string(dir.path().join("report.txt")).unwrap();
        assert!(table.contains("nr_clip") && table.contains("blur"));
    }

    #[test]
    fn method_names_round_trip() {
        let all = [
            Method::HYBRID,
            Method::CLASSICAL,
            Method::NEURAL,
            Method::ablation(NrMode::Full),
            Method::ablation(NrMode::Noclip),
        ];
        for m in all {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!(level_blur(5), 50.0);
    }
}
