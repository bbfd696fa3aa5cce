use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Phase, RigError, RigSession};
use crate::spectra::{contrast_profile, estimate_center, measure_gap, ContrastProfile, SpectraError, Spectrum};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    /// Distance between fiber and pillar axes after alignment (µm, revealed by the twin).
    pub residual_offset: f64,
    /// Gap measured from the final spectrum (µm).
    pub final_gap: f64,
    pub n_spectra_acquired: usize,
    /// Commanded stage position after every move (µm).
    pub trajectory: Vec<[f64; 3]>,
    pub success: bool,
    pub iterations: usize,
    /// Fitted `(x, y)` center after each iteration (stage coordinates, µm).
    pub center_estimates: Vec<[f64; 2]>,
    pub message: Option<String>,
}

/// Relative correction below which the alignment loop stops (µm).
const CONVERGED_UM: f64 = 0.1;
/// Grid pitch of the coarse search for a first contrast signal (µm).
const SEARCH_PITCH_UM: f64 = 2.0;

struct Tally {
    spectra: usize,
    trajectory: Vec<[f64; 3]>,
}

impl RigSession {
    fn move_to_xy(&mut self, x: f64, y: f64, tally: &mut Tally) -> Result<(), RigError> {
        let [cx, cy, _] = self.state.stage_position;
        self.move_stage(x - cx, y - cy, 0.0)?;
        tally.trajectory.push(self.state.stage_position);
        Ok(())
    }

    fn acquire_counted(&mut self, tally: &mut Tally) -> Result<Spectrum, RigError> {
        tally.spectra += 1;
        self.acquire_spectrum()
    }

    fn fundamental_visible(&mut self, tally: &mut Tally) -> Result<bool, RigError> {
        let s = self.acquire_counted(tally)?;
        Ok(self.measure_dips(&s)[0].found)
    }

    /// Lower the fiber while tracking the gap from the fringes, halving the
    /// remaining excess each step, until the stamp rests on the chip.
    pub fn vertical_landing(&mut self) -> Result<f64, RigError> {
        if self.state.phase != Phase::Free {
            return Err(RigError::WrongPhase { op: "vertical-landing", phase: self.state.phase });
        }
        let design = self.config.stamp_design_gap;
        self.log("landing-start", json!({ "stage_z": self.state.stage_position[2] }));
        for _ in 0..200 {
            let s = self.acquire_spectrum()?;
            let est = measure_gap(&s, &self.config.spectra)?.gap_um;
            let commanded = design + self.state.stage_position[2];
            if (est - commanded).abs() > (0.1 * commanded).max(1.0) {
                self.log("landing-aborted", json!({ "estimated_um": est, "commanded_um": commanded }));
                return Err(RigError::LandingFailure { estimated_um: est, commanded_um: commanded });
            }
            let excess = est - design;
            let dz = if excess <= 0.5 { self.state.stage_position[2] + 0.2 } else { (0.5 * excess).max(0.25) };
            self.move_stage(0.0, 0.0, -dz)?;
            if self.state.phase == Phase::Landed {
                break;
            }
        }
        if self.state.phase != Phase::Landed {
            return Err(RigError::LandingFailure { estimated_um: self.state.gap, commanded_um: design });
        }
        let s = self.acquire_spectrum()?;
        let est = measure_gap(&s, &self.config.spectra)?.gap_um;
        self.state.landing_gap_estimate = Some(est);
        self.log("landing-complete", json!({ "gap_estimate_um": est }));
        Ok(est)
    }

    fn scan_axis(&mut self, axis: usize, tally: &mut Tally) -> Result<ContrastProfile, RigError> {
        let origin = [self.state.stage_position[0], self.state.stage_position[1]];
        let k_max = (self.config.scan_half_width / self.config.scan_step).round() as i64;
        let mut scan = Vec::with_capacity((2 * k_max + 1) as usize);
        for k in -k_max..=k_max {
            let mut p = origin;
            p[axis] += k as f64 * self.config.scan_step;
            self.move_to_xy(p[0], p[1], tally)?;
            scan.push((p[axis], self.acquire_counted(tally)?));
        }
        Ok(contrast_profile(&scan, &self.expected_pillar(), &self.config.spectra)?)
    }

    fn raster(&mut self, tally: &mut Tally) -> Result<(ContrastProfile, ContrastProfile), RigError> {
        let origin = [self.state.stage_position[0], self.state.stage_position[1]];
        let k_max = (self.config.scan_half_width / self.config.scan_step).round() as i64;
        let axis: Vec<f64> = (-k_max..=k_max).map(|k| k as f64 * self.config.scan_step).collect();
        let expected = self.expected_pillar();
        let mut rows = Vec::new();
        for &dy in &axis {
            let mut row = Vec::new();
            for &dx in &axis {
                self.move_to_xy(origin[0] + dx, origin[1] + dy, tally)?;
                row.push((origin[0] + dx, self.acquire_counted(tally)?));
            }
            rows.push(contrast_profile(&row, &expected, &self.config.spectra)?);
        }
        let peak = |p: &ContrastProfile| p.contrast_per_mode[0].iter().copied().fold(0.0, f64::max);
        let best_row = (0..rows.len()).max_by(|a, b| peak(&rows[*a]).total_cmp(&peak(&rows[*b]))).unwrap_or(0);
        let best_col = (0..axis.len())
            .max_by(|a, b| rows[best_row].contrast_per_mode[0][*a].total_cmp(&rows[best_row].contrast_per_mode[0][*b]))
            .unwrap_or(0);
        let column = ContrastProfile {
            offsets: axis.iter().map(|d| origin[1] + d).collect(),
            contrast_per_mode: (0..expected.n_transverse_modes)
                .map(|m| rows.iter().map(|r| r.contrast_per_mode[m][best_col]).collect())
                .collect(),
        };
        Ok((rows.swap_remove(best_row), column))
    }

    fn report(&mut self, tally: Tally, iterations: usize, centers: Vec<[f64; 2]>, msg: Option<String>) -> AlignmentReport {
        let final_gap = self
            .acquire_spectrum()
            .ok()
            .and_then(|s| measure_gap(&s, &self.config.spectra).ok())
            .map(|g| g.gap_um)
            .unwrap_or(f64::NAN);
        let residual = self.state.residual_offset();
        let success = msg.is_none() && residual < 0.2;
        let report = AlignmentReport {
            residual_offset: residual,
            final_gap,
            n_spectra_acquired: tally.spectra + 1,
            trajectory: tally.trajectory,
            success,
            iterations,
            center_estimates: centers,
            message: msg,
        };
        self.log(
            "alignment-complete",
            json!({ "success": success, "iterations": iterations, "spectra": report.n_spectra_acquired }),
        );
        report
    }

    /// Center the fiber on the pillar: find a contrast signal, then
    /// alternate x and y cross-scans, moving to the fitted center of the
    /// fundamental-mode contrast, until the correction is below 0.1 µm.
    pub fn auto_align(&mut self) -> Result<AlignmentReport, RigError> {
        if !matches!(self.state.phase, Phase::Free | Phase::Landed) {
            return Err(RigError::WrongPhase { op: "auto-align", phase: self.state.phase });
        }
        self.log("alignment-start", json!({ "stage_position": self.state.stage_position }));
        let mut tally = Tally { spectra: 0, trajectory: vec![self.state.stage_position] };
        let start = [self.state.stage_position[0], self.state.stage_position[1]];

        if !self.fundamental_visible(&mut tally)? {
            let r = self.config.search_radius;
            let n = (r / SEARCH_PITCH_UM).floor() as i64;
            let mut grid: Vec<[f64; 2]> = (-n..=n)
                .flat_map(|i| (-n..=n).map(move |j| [i as f64 * SEARCH_PITCH_UM, j as f64 * SEARCH_PITCH_UM]))
                .filter(|p| p[0].hypot(p[1]) <= r && (p[0] != 0.0 || p[1] != 0.0))
                .collect();
            grid.sort_by(|a, b| a[0].hypot(a[1]).total_cmp(&b[0].hypot(b[1])));
            let mut found = false;
            for p in grid {
                self.move_to_xy(start[0] + p[0], start[1] + p[1], &mut tally)?;
                if self.fundamental_visible(&mut tally)? {
                    found = true;
                    break;
                }
            }
            if !found {
                self.move_to_xy(start[0], start[1], &mut tally)?;
                let msg = format!("no pillar signal within {r} µm of the start position");
                return Ok(self.report(tally, 0, Vec::new(), Some(msg)));
            }
        }

        let mut centers = Vec::new();
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..self.config.max_align_iterations {
            iterations += 1;
            let before = [self.state.stage_position[0], self.state.stage_position[1]];
            let (px, py) = if self.config.full_raster {
                let (row, col) = self.raster(&mut tally)?;
                (Ok(row), Some(col))
            } else {
                (self.scan_axis(0, &mut tally), None)
            };
            let profile_x = px?;
            let cx = self.axis_center(&profile_x, before[0])?;
            self.move_to_xy(cx.0, before[1], &mut tally)?;
            let profile_y = match py {
                Some(col) => col,
                None => self.scan_axis(1, &mut tally)?,
            };
            let cy = self.axis_center(&profile_y, before[1])?;
            self.move_to_xy(cx.0, cy.0, &mut tally)?;
            let (Some(ux), Some(uy)) = (cx.1, cy.1) else {
                self.log("alignment-iteration", json!({ "iteration": iterations, "fitted": false }));
                continue;
            };
            let cx = CenterFit { center: cx.0, uncertainty: ux };
            let cy = CenterFit { center: cy.0, uncertainty: uy };
            centers.push([cx.center, cy.center]);
            let correction = (cx.center - before[0]).hypot(cy.center - before[1]);
            self.log("alignment-iteration", json!({ "iteration": iterations, "correction_um": correction }));
            if correction < CONVERGED_UM && cx.uncertainty < CONVERGED_UM && cy.uncertainty < CONVERGED_UM {
                converged = true;
                break;
            }
        }
        let msg = (!converged).then(|| format!("not converged after {iterations} iterations"));
        Ok(self.report(tally, iterations, centers, msg))
    }
}

struct CenterFit {
    center: f64,
    uncertainty: f64,
}

impl RigSession {
    /// Fitted center with its uncertainty, or the brightest scan point
    /// (no uncertainty) when the peak is at the edge or too narrow to fit.
    /// Stays at `origin` when the scan saw no dip at all.
    fn axis_center(&self, p: &ContrastProfile, origin: f64) -> Result<(f64, Option<f64>), RigError> {
        match estimate_center(p) {
            Ok(c) => Ok((c.center, Some(c.uncertainty))),
            Err(SpectraError::NoInteriorMaximum | SpectraError::FitFailed(_)) => {
                Ok((argmax_offset(p).unwrap_or(origin), None))
            }
            Err(e) => Err(e.into()),
        }
    }
}

fn argmax_offset(p: &ContrastProfile) -> Option<f64> {
    p.contrast_per_mode[0]
        .iter()
        .enumerate()
        .filter(|(_, c)| **c > 0.0)
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| p.offsets[i])
}
