//! Plot-ready CSV: map graphs, density curves and correlation sequences.

use std::io::{self, Write};

use acim_core::step::fmt17;
use acim_core::{PiecewiseMap, StepFunction};

pub const GRAPH_POINTS: usize = 10_000;

/// `x,tau` sampled on `points` midpoints, with a blank line wherever the branch changes.
pub fn write_map_graph<W: Write>(map: &PiecewiseMap, points: usize, mut w: W) -> io::Result<()> {
    writeln!(w, "x,tau")?;
    let mut last = None;
    for j in 0..points {
        let x = (j as f64 + 0.5) / points as f64;
        // points in an unmaterialized tail gap are skipped
        let Ok(a) = map.apply(x) else { continue };
        if last.is_some_and(|i| i != a.index) {
            writeln!(w)?;
        }
        last = Some(a.index);
        writeln!(w, "{},{}", fmt17(x), fmt17(a.value))?;
    }
    Ok(())
}

/// Step density as a polyline `x,density`, two corners per piece.
pub fn write_density_curve<W: Write>(f: &StepFunction, mut w: W) -> io::Result<()> {
    writeln!(w, "x,density")?;
    for (l, r, v) in f.pieces() {
        writeln!(w, "{},{}", fmt17(l), fmt17(v))?;
        writeln!(w, "{},{}", fmt17(r), fmt17(v))?;
    }
    Ok(())
}

pub fn write_correlations<W: Write>(values: &[f64], mut w: W) -> io::Result<()> {
    writeln!(w, "n,C_n")?;
    for (n, c) in values.iter().enumerate() {
        writeln!(w, "{n},{}", fmt17(*c))?;
    }
    Ok(())
}
