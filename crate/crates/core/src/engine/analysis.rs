//! Radial distribution function.

use crate::error::{Error, Result};
use crate::geometry::SimBox;

/// Pair-distance histogram normalized by ideal-gas shell counts, optionally
/// accumulated over many frames.
#[derive(Debug, Clone)]
pub struct RdfAccumulator {
    r_max: f64,
    bins: usize,
    counts: Vec<f64>,
    frames: usize,
    n_atoms: usize,
    volume: f64,
}

impl RdfAccumulator {
    pub fn new(r_max: f64, bins: usize) -> Result<Self> {
        if !(r_max > 0.0) || bins == 0 {
            return Err(Error::invalid_input(format!(
                "need r_max > 0 and bins >= 1, got {r_max}/{bins}"
            )));
        }
        Ok(RdfAccumulator {
            r_max,
            bins,
            counts: vec![0.0; bins],
            frames: 0,
            n_atoms: 0,
            volume: 0.0,
        })
    }

    /// Histogram all pairs of one frame under minimum-image distances.
    pub fn add_frame(&mut self, positions: &[[f64; 3]], sim_box: &SimBox) -> Result<()> {
        if self.r_max > 0.5 * sim_box.min_side() {
            return Err(Error::invalid_input(format!(
                "r_max {} exceeds half the minimum box side {}",
                self.r_max,
                0.5 * sim_box.min_side()
            )));
        }
        if self.frames == 0 {
            self.n_atoms = positions.len();
            self.volume = sim_box.volume();
        } else if positions.len() != self.n_atoms {
            return Err(Error::invalid_input("frames must have equal atom counts"));
        }
        let l = sim_box.lengths();
        let dr = self.r_max / self.bins as f64;
        for i in 0..positions.len() {
            for j in (i + 1)..positions.len() {
                let mut d2 = 0.0;
                for dim in 0..3 {
                    let mut d = positions[j][dim] - positions[i][dim];
                    d -= l[dim] * (d / l[dim]).round();
                    d2 += d * d;
                }
                let r = d2.sqrt();
                if r < self.r_max {
                    self.counts[(r / dr) as usize] += 2.0;
                }
            }
        }
        self.frames += 1;
        Ok(())
    }

    /// (bin center r, g(r)) pairs.
    pub fn finish(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.bins);
        if self.frames == 0 || self.n_atoms < 2 {
            let dr = self.r_max / self.bins as f64;
            for b in 0..self.bins {
                out.push(((b as f64 + 0.5) * dr, 0.0));
            }
            return out;
        }
        let dr = self.r_max / self.bins as f64;
        let rho = self.n_atoms as f64 / self.volume;
        for b in 0..self.bins {
            let r_lo = b as f64 * dr;
            let r_hi = r_lo + dr;
            let shell = 4.0 / 3.0 * std::f64::consts::PI * (r_hi.powi(3) - r_lo.powi(3));
            let ideal = self.n_atoms as f64 * rho * shell * self.frames as f64;
            out.push(((r_lo + r_hi) * 0.5, self.counts[b] / ideal));
        }
        out
    }
}

/// One-shot g(r) of a single frame.
pub fn rdf(
    positions: &[[f64; 3]],
    sim_box: &SimBox,
    r_max: f64,
    bins: usize,
) -> Result<Vec<(f64, f64)>> {
    let mut acc = RdfAccumulator::new(r_max, bins)?;
    acc.add_frame(positions, sim_box)?;
    Ok(acc.finish())
}
