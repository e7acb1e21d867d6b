// SPDX-License-Identifier: Apache-2.0

use plotters::prelude::*;

use crate::table::Table;

const COLOURS: [RGBColor; 6] = [
    RGBColor(31, 119, 180),
    RGBColor(214, 39, 40),
    RGBColor(44, 160, 44),
    RGBColor(148, 103, 189),
    RGBColor(255, 127, 14),
    RGBColor(23, 190, 207),
];

fn bounds(v: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = v.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !(lo.is_finite() && hi.is_finite()) {
        return None;
    }
    if hi > lo {
        Some((lo, hi))
    } else {
        let pad = lo.abs().max(1.0) * 0.05;
        Some((lo - pad, hi + pad))
    }
}

/// Line plot of the table's declared columns, or `None` when it has no plot
/// or nothing finite to draw.
pub fn svg(table: &Table) -> Option<String> {
    let spec = table.plot.as_ref()?;
    let keep = |x: f64, log: bool| x.is_finite() && (!log || x > 0.0);
    let mut groups: Vec<String> = Vec::new();
    if let Some(g) = spec.group {
        for r in &table.rows {
            let key = r[g].to_string();
            if !groups.contains(&key) {
                groups.push(key);
            }
        }
    } else {
        groups.push(String::new());
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for &y in &spec.ys {
        for key in &groups {
            let pts = table
                .rows
                .iter()
                .filter(|r| spec.group.map_or(true, |g| r[g].to_string() == *key))
                .filter_map(|r| Some((r[spec.x].as_f64()?, r[y].as_f64()?)))
                .filter(|&(a, b)| keep(a, spec.log_x) && keep(b, spec.log_y))
                .collect();
            let name = if key.is_empty() {
                table.columns[y].clone()
            } else {
                format!("{} {key}", table.columns[y])
            };
            series.push((name, pts));
        }
    }
    let all = || series.iter().flat_map(|s| s.1.iter());
    let (x0, x1) = bounds(all().map(|p| p.0))?;
    let (y0, y1) = bounds(all().map(|p| p.1))?;

    let mut out = String::new();
    {
        let root = SVGBackend::with_string(&mut out, (720, 480)).into_drawing_area();
        root.fill(&WHITE).ok()?;
        let mut builder = ChartBuilder::on(&root);
        builder
            .caption(&table.name, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(36)
            .y_label_area_size(64);
        let x_name = table.columns[spec.x].clone();
        macro_rules! draw {
            ($chart:expr) => {{
                let mut chart = $chart;
                chart
                    .configure_mesh()
                    .x_desc(x_name.as_str())
                    .draw()
                    .ok()?;
                for (i, (name, pts)) in series.iter().enumerate() {
                    let colour = COLOURS[i % COLOURS.len()];
                    chart
                        .draw_series(LineSeries::new(pts.iter().copied(), &colour))
                        .ok()?
                        .label(name.as_str())
                        .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], colour));
                }
                chart
                    .configure_series_labels()
                    .background_style(WHITE.mix(0.8))
                    .border_style(BLACK)
                    .draw()
                    .ok()?;
            }};
        }
        match (spec.log_x, spec.log_y) {
            (false, false) => draw!(builder.build_cartesian_2d(x0..x1, y0..y1).ok()?),
            (true, false) => draw!(builder.build_cartesian_2d((x0..x1).log_scale(), y0..y1).ok()?),
            (false, true) => draw!(builder.build_cartesian_2d(x0..x1, (y0..y1).log_scale()).ok()?),
            (true, true) => draw!(builder
                .build_cartesian_2d((x0..x1).log_scale(), (y0..y1).log_scale())
                .ok()?),
        }
        root.present().ok()?;
    }
    Some(out)
}
