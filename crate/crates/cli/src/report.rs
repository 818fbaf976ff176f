//! The `workspace` report.

use std::fmt::Write as _;

use ler_core::kinematics::{workspace_aperture_deg, workspace_volume, JointLimits};
use ler_core::scene::{
    coverage, monte_carlo_volume, Conflict, SceneDescription, SceneError, PRNG_NAME,
};
use serde_json::{json, Value};

pub const DEFAULT_SAMPLES: usize = 100_000;

pub struct WorkspaceReport {
    seed: u64,
    samples: usize,
    limits: JointLimits,
    scene: SceneDescription,
    analytic_volume: f64,
    mc_volume: f64,
    aperture: f64,
    coverage: f64,
    conflicts: Vec<Conflict>,
}

impl WorkspaceReport {
    pub fn compute(
        limits: &JointLimits,
        scene: &SceneDescription,
        samples: usize,
        seed: u64,
    ) -> Result<Self, SceneError> {
        let coverage = coverage(&scene.cavity, limits, samples, seed)?;
        Ok(WorkspaceReport {
            seed,
            samples,
            limits: *limits,
            scene: scene.clone(),
            analytic_volume: workspace_volume(limits),
            mc_volume: monte_carlo_volume(limits, samples, seed),
            aperture: workspace_aperture_deg(limits),
            coverage,
            conflicts: scene.conflicts(),
        })
    }

    fn relative_error(&self) -> f64 {
        (self.mc_volume - self.analytic_volume).abs() / self.analytic_volume
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut row = |k: &str, v: String| writeln!(s, "{k:<22}{v}").expect("write to String");
        row("prng", PRNG_NAME.to_string());
        row("seed", self.seed.to_string());
        row("samples", self.samples.to_string());
        row("tilt_max_deg", format!("{:.3}", self.limits.tilt_max_deg()));
        row(
            "insertion_max_mm",
            format!("{:.3}", self.limits.insertion_max_mm()),
        );
        row("aperture_deg", format!("{:.3}", self.aperture));
        row(
            "analytic_volume_mm3",
            format!("{:.2}", self.analytic_volume),
        );
        row("mc_volume_mm3", format!("{:.2}", self.mc_volume));
        row(
            "mc_relative_error",
            format!("{:.4}%", 100.0 * self.relative_error()),
        );
        row(
            "cavity_volume_mm3",
            format!("{:.2}", self.scene.cavity.volume()),
        );
        row("coverage", format!("{:.4}", self.coverage));
        row("trocars", self.scene.trocars.len().to_string());
        if self.conflicts.is_empty() {
            row("conflicts", "none".into());
        }
        for c in &self.conflicts {
            let [x, y] = self.scene.trocars[c.site].position_mm;
            row(
                "conflict",
                format!(
                    "trocar {} at ({x:.1}, {y:.1}) mm: {}",
                    c.site,
                    cause_name(c)
                ),
            );
        }
        s
    }

    pub fn to_json(&self) -> Value {
        let conflicts: Vec<Value> = self
            .conflicts
            .iter()
            .map(|c| json!({"site": c.site, "cause": cause_name(c), "position_mm": self.scene.trocars[c.site].position_mm}))
            .collect();
        json!({
            "prng": PRNG_NAME,
            "seed": self.seed,
            "samples": self.samples,
            "limits": self.limits,
            "aperture_deg": self.aperture,
            "analytic_volume_mm3": self.analytic_volume,
            "mc_volume_mm3": self.mc_volume,
            "mc_relative_error": self.relative_error(),
            "cavity_volume_mm3": self.scene.cavity.volume(),
            "coverage": self.coverage,
            "trocars": self.scene.trocars.len(),
            "conflicts": conflicts,
        })
    }
}

fn cause_name(c: &Conflict) -> String {
    serde_json::to_value(c.cause)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}
