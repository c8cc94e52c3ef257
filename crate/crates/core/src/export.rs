//! CSV and SVG export of run results.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-parsing a CSV reproduces the in-memory values exactly and identical
//! runs produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::density::GridSpec;
use crate::error::Result;
use crate::runner::RunResult;

/// Writes `trajectories.csv`, `grid.csv`, and `metrics.csv` into `dir`
/// (created if missing). Returns the written paths.
pub fn export_csv(result: &RunResult, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut csv = String::from(
        "step,agent,phi,theta,psi,p,q,r,u,v,w,x,y,z,tank_height\n",
    );
    for (agent, traj) in result.trajectories.iter().enumerate() {
        for (step, state) in traj.states.iter().enumerate() {
            write!(csv, "{step},{agent}").unwrap();
            for v in state.0.iter() {
                write!(csv, ",{v}").unwrap();
            }
            writeln!(csv, ",{}", traj.tank_heights[step]).unwrap();
        }
    }
    let path = dir.join("trajectories.csv");
    std::fs::write(&path, csv)?;
    written.push(path);

    let spec = &result.grid.spec;
    let mut csv = String::from("ix,iy,x,y,rho0,dose_g,rho_f\n");
    for iy in 0..spec.ny {
        for ix in 0..spec.nx {
            let c = spec.cell_center(ix, iy);
            let i = spec.index(ix, iy);
            writeln!(
                csv,
                "{ix},{iy},{},{},{},{},{}",
                c.x, c.y, result.grid.rho0[i], result.grid.dose[i], result.grid.rho_f[i]
            )
            .unwrap();
        }
    }
    let path = dir.join("grid.csv");
    std::fs::write(&path, csv)?;
    written.push(path);

    let m = &result.metrics;
    let d = &result.diagnostics;
    let mut csv = String::from(
        "method,seed,total_dosage_g,reduction_rate_pct,max_survival_density,\
         released_g,deposited_g,discarded_g,input_clamps,state_clamps,\
         max_ledger_imbalance\n",
    );
    writeln!(
        csv,
        "{},{},{},{},{},{},{},{},{},{},{}",
        result.config.method.label(),
        result.config.seed,
        m.total_dosage_g,
        m.reduction_rate_pct,
        m.max_survival_density,
        d.released_g,
        d.deposited_g,
        d.discarded_g,
        d.input_clamps,
        d.state_clamps,
        d.max_ledger_imbalance
    )
    .unwrap();
    let path = dir.join("metrics.csv");
    std::fs::write(&path, csv)?;
    written.push(path);

    Ok(written)
}

/// Renders per-cell values as an SVG heatmap on a fixed 800x800 canvas.
///
/// Colormap: 256 levels from blue (low) to red (high), `rgb(i, 0, 255-i)`
/// with `i = round(255 * v / vmax)`. Rectangles are cell-exact; runs of
/// equal-color cells within a row are merged into one rectangle.
pub fn export_svg_heatmap(values: &[f64], spec: &GridSpec, path: &Path) -> Result<()> {
    assert_eq!(values.len(), spec.n_cells());
    let vmax = values.iter().copied().fold(0.0f64, f64::max);
    let level = |v: f64| -> u8 {
        if vmax <= 0.0 {
            0
        } else {
            ((v / vmax) * 255.0).round().clamp(0.0, 255.0) as u8
        }
    };

    let mut svg = String::new();
    writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"800\" \
         viewBox=\"0 0 {} {}\" preserveAspectRatio=\"none\" shape-rendering=\"crispEdges\">",
        spec.nx, spec.ny
    )
    .unwrap();
    writeln!(
        svg,
        "<!-- heatmap: 256-level colormap rgb(i,0,255-i), i=round(255*value/max); \
         blue=low, red=high; one unit per {} m cell -->",
        spec.cell_size
    )
    .unwrap();

    // Row-major sweep with run-length merging; the SVG y-axis points down,
    // so row iy draws at ny-1-iy to keep north up.
    for iy in 0..spec.ny {
        let row_y = spec.ny - 1 - iy;
        let mut run_start = 0usize;
        let mut run_level = level(values[spec.index(0, iy)]);
        for ix in 1..=spec.nx {
            let lv = if ix < spec.nx {
                level(values[spec.index(ix, iy)])
            } else {
                // Sentinel forcing the final flush.
                run_level.wrapping_add(1)
            };
            if lv != run_level {
                writeln!(
                    svg,
                    "<rect x=\"{run_start}\" y=\"{row_y}\" width=\"{}\" height=\"1\" \
                     fill=\"rgb({},0,{})\"/>",
                    ix - run_start,
                    run_level,
                    255 - run_level as u16
                )
                .unwrap();
                run_start = ix;
                run_level = lv;
            }
        }
    }
    writeln!(svg, "</svg>").unwrap();
    std::fs::write(path, svg)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Vec2;
    use crate::runner::run_scenario;
    use crate::scenario::{ComponentConfig, Method, ScenarioConfig};

    fn small_config() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::default();
        cfg.method = Method::Lm;
        cfg.n_agents = 1;
        cfg.operation_time = 0.2;
        cfg.dt = 0.1;
        cfg.horizon = 3;
        cfg.mpc.horizon = 3;
        cfg.n_sample_points = 10;
        cfg.domain.size = [10.0, 10.0];
        cfg.domain.cell_size = 0.5;
        cfg.field.components = vec![ComponentConfig {
            mean: [5.0, 5.0],
            covariance: [[2.0, 0.0], [0.0, 2.0]],
            weight: 1.0,
        }];
        cfg.smc.basis_count = 4;
        cfg.wasserstein_sample_interval = Some(0);
        cfg
    }

    #[test]
    fn trajectory_csv_has_header_and_row_per_step() {
        let result = run_scenario(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_csv(&result, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        // Header plus (steps + 1) rows for the single agent.
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[0].starts_with("step,agent,phi"));
    }

    #[test]
    fn trajectory_csv_roundtrips_exactly() {
        let result = run_scenario(&small_config()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        export_csv(&result, dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("trajectories.csv")).unwrap();
        for (row, line) in text.lines().skip(1).enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let step: usize = fields[0].parse().unwrap();
            let agent: usize = fields[1].parse().unwrap();
            assert_eq!(agent, 0);
            assert_eq!(step, row);
            let state = &result.trajectories[agent].states[step];
            for (i, v) in state.0.iter().enumerate() {
                let parsed: f64 = fields[2 + i].parse().unwrap();
                assert_eq!(parsed, *v, "field {i} row {row}");
            }
            let h: f64 = fields[14].parse().unwrap();
            assert_eq!(h, result.trajectories[agent].tank_heights[step]);
        }
    }

    #[test]
    fn exports_are_byte_stable() {
        let cfg = small_config();
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        let da = tempfile::tempdir().unwrap();
        let db = tempfile::tempdir().unwrap();
        export_csv(&a, da.path()).unwrap();
        export_csv(&b, db.path()).unwrap();
        for name in ["trajectories.csv", "grid.csv", "metrics.csv"] {
            let ba = std::fs::read(da.path().join(name)).unwrap();
            let bb = std::fs::read(db.path().join(name)).unwrap();
            assert_eq!(ba, bb, "{name} differs");
        }
        export_svg_heatmap(&a.grid.rho_f, &a.grid.spec, &da.path().join("h.svg")).unwrap();
        export_svg_heatmap(&b.grid.rho_f, &b.grid.spec, &db.path().join("h.svg")).unwrap();
        let sa = std::fs::read(da.path().join("h.svg")).unwrap();
        let sb = std::fs::read(db.path().join("h.svg")).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn zero_grid_svg_is_single_color() {
        let spec = GridSpec::new(Vec2::new(0.0, 0.0), 1.0, 8, 8).unwrap();
        let values = vec![0.0; 64];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("zero.svg");
        export_svg_heatmap(&values, &spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // One merged rect per row, all at level 0.
        assert_eq!(text.matches("<rect").count(), 8);
        assert_eq!(text.matches("rgb(0,0,255)").count(), 8);
    }

    #[test]
    fn svg_rectangles_tile_rows() {
        let spec = GridSpec::new(Vec2::new(0.0, 0.0), 1.0, 4, 2) .unwrap();
        let values = vec![0.0, 0.0, 1.0, 1.0, 0.5, 0.5, 0.5, 0.25];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tiles.svg");
        export_svg_heatmap(&values, &spec, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // Row 0 (drawn at y=1): two runs; row 1 (y=0): two runs.
        assert_eq!(text.matches("<rect").count(), 4);
        assert!(text.contains("width=\"800\" height=\"800\""));
    }
}
