//! Plain CSV writers. Every float is written with 17 significant digits so that files
//! round-trip exactly and can be compared byte for byte.

use std::io::Write;

use crate::charges::ChargeTrajectory;
use crate::dynamics::GridFunction;
use crate::Result;

pub const TRAJECTORY_HEADER: &str = "t,re_q1,im_q1,abs2_q1,re_q2,im_q2,abs2_q2,inner_iters,residual";
pub const GRID_HEADER: &str = "x,re_psi,im_psi,abs2_psi";

/// `{:.16e}`: one digit before the point plus sixteen after.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_trajectory_csv<W: Write>(mut out: W, traj: &ChargeTrajectory) -> Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    for n in 0..traj.len() {
        let (a, b) = (traj.q1[n], traj.q2[n]);
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_f64(traj.times[n]),
            fmt_f64(a.re),
            fmt_f64(a.im),
            fmt_f64(a.norm_sqr()),
            fmt_f64(b.re),
            fmt_f64(b.im),
            fmt_f64(b.norm_sqr()),
            traj.inner_iters[n],
            fmt_f64(traj.residuals[n]),
        )?;
    }
    Ok(())
}

pub fn write_grid_csv<W: Write>(mut out: W, gf: &GridFunction) -> Result<()> {
    writeln!(out, "{GRID_HEADER}")?;
    for (k, v) in gf.values.iter().enumerate() {
        writeln!(out, "{},{},{},{}", fmt_f64(gf.grid.x(k)), fmt_f64(v.re), fmt_f64(v.im), fmt_f64(v.norm_sqr()))?;
    }
    Ok(())
}
