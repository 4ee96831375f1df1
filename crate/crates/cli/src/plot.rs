//! Static SVG plots from an evaluation detail CSV: per-class example
//! extrapolations (observed context, truth, prediction, and a +/-1 std band
//! when the model reports uncertainty) and MSE-versus-step curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone)]
pub struct DetailRow {
    pub model: String,
    pub seed: String,
    pub class: String,
    pub curve_id: usize,
    pub step: i64,
    pub prediction: Option<f64>,
    pub target: f64,
    pub sq_error: Option<f64>,
    pub pred_std: Option<f64>,
}

pub const DETAIL_HEADER: &str =
    "model,variant,seed,class,curve_id,step,prediction,target,sq_error,pred_std";

pub fn parse_detail_csv(text: &str) -> Result<Vec<DetailRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == DETAIL_HEADER => {}
        Some(h) => return Err(format!("unexpected header '{h}'")),
        None => return Err("empty file".into()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(format!("line {}: expected 10 fields, got {}", i + 2, f.len()));
        }
        let num = |s: &str, what: &str| -> Result<f64, String> {
            s.parse()
                .map_err(|_| format!("line {}: bad {what} '{s}'", i + 2))
        };
        let opt_num = |s: &str, what: &str| -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                num(s, what).map(Some)
            }
        };
        rows.push(DetailRow {
            model: f[0].to_string(),
            seed: f[2].to_string(),
            class: f[3].to_string(),
            curve_id: f[4]
                .parse()
                .map_err(|_| format!("line {}: bad curve_id '{}'", i + 2, f[4]))?,
            step: f[5]
                .parse()
                .map_err(|_| format!("line {}: bad step '{}'", i + 2, f[5]))?,
            prediction: opt_num(f[6], "prediction")?,
            target: num(f[7], "target")?,
            sq_error: opt_num(f[8], "sq_error")?,
            pred_std: opt_num(f[9], "pred_std")?,
        });
    }
    if rows.is_empty() {
        return Err("no data rows".into());
    }
    Ok(rows)
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 48.0;

struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn of(xs: impl Iterator<Item = f64>, ys: impl Iterator<Item = f64>) -> Axes {
        let (mut x_min, mut x_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for x in xs {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
        }
        let (mut y_min, mut y_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for y in ys {
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
        if !y_min.is_finite() {
            y_min = 0.0;
            y_max = 1.0;
        }
        let pad = ((y_max - y_min) * 0.1).max(0.1);
        Axes {
            x_min,
            x_max: x_max.max(x_min + 1.0),
            y_min: y_min - pad,
            y_max: y_max + pad,
        }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (H - 2.0 * MARGIN)
    }
}

fn polyline(axes: &Axes, pts: &[(f64, f64)], style: &str, class: &str) -> String {
    let coords: Vec<String> = pts
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", axes.px(x), axes.py(y)))
        .collect();
    format!(
        "  <polyline class=\"{class}\" fill=\"none\" {style} points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{:.0}\" y=\"20\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        W / 2.0
    )
}

fn svg_axes(axes: &Axes, x_label: &str, y_label: &str) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        "  <line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <text x=\"{cx:.0}\" y=\"{below:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">{x_label}</text>\n\
         <text x=\"14\" y=\"{cy:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\" transform=\"rotate(-90 14 {cy:.0})\">{y_label}</text>\n",
        m = MARGIN,
        b = H - MARGIN,
        r = W - MARGIN,
        t = MARGIN,
        cx = W / 2.0,
        below = H - 12.0,
        cy = H / 2.0,
    );
    for frac in [0.0, 0.5, 1.0] {
        let xv = axes.x_min + frac * (axes.x_max - axes.x_min);
        let yv = axes.y_min + frac * (axes.y_max - axes.y_min);
        let _ = write!(
            s,
            "  <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">{:.1}</text>\n\
             <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{:.2}</text>\n",
            axes.px(xv),
            H - MARGIN + 14.0,
            xv,
            MARGIN - 4.0,
            axes.py(yv) + 3.0,
            yv,
        );
    }
    s
}

/// Extrapolation picture for one curve: context dots (steps <= 0 map to
/// x = step + n_context), truth line and prediction line over the horizon,
/// and a +/-1 std band polygon when every step carries an uncertainty.
pub fn render_extrapolation(rows: &[&DetailRow], title: &str) -> String {
    let n_context = rows.iter().filter(|r| r.step <= 0).count() as i64;
    let x_of = |step: i64| (step + n_context) as f64;
    let mut context: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.step <= 0)
        .map(|r| (x_of(r.step), r.target))
        .collect();
    context.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut horizon: Vec<&&DetailRow> = rows.iter().filter(|r| r.step >= 1).collect();
    horizon.sort_by_key(|r| r.step);
    let truth: Vec<(f64, f64)> = horizon.iter().map(|r| (x_of(r.step), r.target)).collect();
    let pred: Vec<(f64, f64)> = horizon
        .iter()
        .filter_map(|r| r.prediction.map(|p| (x_of(r.step), p)))
        .collect();
    let band: Option<Vec<(f64, f64, f64)>> = horizon
        .iter()
        .map(|r| {
            r.prediction
                .zip(r.pred_std)
                .map(|(p, s)| (x_of(r.step), p - s, p + s))
        })
        .collect();

    let ys = context
        .iter()
        .map(|&(_, y)| y)
        .chain(truth.iter().map(|&(_, y)| y))
        .chain(pred.iter().map(|&(_, y)| y))
        .chain(
            band.iter()
                .flatten()
                .flat_map(|&(_, lo, hi)| [lo, hi]),
        );
    let xs = context
        .iter()
        .map(|&(x, _)| x)
        .chain(truth.iter().map(|&(x, _)| x));
    let axes = Axes::of(xs, ys);

    let mut svg = svg_header(title);
    svg.push_str(&svg_axes(&axes, "x", "y"));
    if let Some(band) = band {
        let mut pts: Vec<String> = band
            .iter()
            .map(|&(x, lo, _)| format!("{:.2},{:.2}", axes.px(x), axes.py(lo)))
            .collect();
        pts.extend(
            band.iter()
                .rev()
                .map(|&(x, _, hi)| format!("{:.2},{:.2}", axes.px(x), axes.py(hi))),
        );
        let _ = writeln!(
            svg,
            "  <polygon class=\"uncertainty-band\" fill=\"#88aaff\" fill-opacity=\"0.35\" stroke=\"none\" points=\"{}\"/>",
            pts.join(" ")
        );
    }
    svg.push_str(&polyline(
        &axes,
        &truth,
        "stroke=\"#222222\" stroke-width=\"1.5\"",
        "truth",
    ));
    svg.push_str(&polyline(
        &axes,
        &pred,
        "stroke=\"#cc3311\" stroke-width=\"1.5\" stroke-dasharray=\"5,3\"",
        "prediction",
    ));
    for &(x, y) in &context {
        let _ = writeln!(
            svg,
            "  <circle class=\"context\" cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.5\" fill=\"#0077bb\"/>",
            axes.px(x),
            axes.py(y)
        );
    }
    let _ = writeln!(
        svg,
        "  <text x=\"{:.0}\" y=\"36\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"middle\">context (dots), truth (solid), prediction (dashed)</text>",
        W / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

/// MSE against extrapolation step, one line per curve class.
pub fn render_mse_vs_step(per_class: &BTreeMap<String, Vec<(i64, f64)>>, title: &str) -> String {
    let colors = ["#0077bb", "#cc3311", "#009988", "#ee7733"];
    let axes = Axes::of(
        per_class
            .values()
            .flatten()
            .map(|&(s, _)| s as f64)
            .chain([1.0]),
        per_class.values().flatten().map(|&(_, m)| m).chain([0.0]),
    );
    let mut svg = svg_header(title);
    svg.push_str(&svg_axes(&axes, "step", "mse"));
    for (i, (class, pts)) in per_class.iter().enumerate() {
        let line: Vec<(f64, f64)> = pts.iter().map(|&(s, m)| (s as f64, m)).collect();
        let color = colors[i % colors.len()];
        svg.push_str(&polyline(
            &axes,
            &line,
            &format!("stroke=\"{color}\" stroke-width=\"1.5\""),
            "mse",
        ));
        let _ = writeln!(
            svg,
            "  <text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{class}</text>",
            W - MARGIN + 4.0,
            axes.py(line.last().map(|&(_, m)| m).unwrap_or(0.0)) + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_alphanumeric() { c } else { '-' })
        .collect::<String>()
        .split('-')
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

/// Render every plot for a parsed detail file into `out_dir`. Returns the
/// paths written.
pub fn render_all(rows: &[DetailRow], out_dir: &Path) -> Result<Vec<std::path::PathBuf>, String> {
    std::fs::create_dir_all(out_dir).map_err(|e| e.to_string())?;
    let mut written = Vec::new();
    let mut model_keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let key = (r.model.clone(), r.seed.clone());
        if !model_keys.contains(&key) {
            model_keys.push(key);
        }
    }
    for (model, seed) in &model_keys {
        let mrows: Vec<&DetailRow> = rows
            .iter()
            .filter(|r| &r.model == model && &r.seed == seed)
            .collect();
        let mslug = format!("{}-seed{}", slug(model), seed);
        // one example extrapolation per class: the first curve_id seen
        let mut classes: Vec<String> = Vec::new();
        for r in &mrows {
            if !classes.contains(&r.class) {
                classes.push(r.class.clone());
            }
        }
        for class in &classes {
            let Some(first_id) = mrows
                .iter()
                .find(|r| &r.class == class)
                .map(|r| r.curve_id)
            else {
                continue;
            };
            let curve_rows: Vec<&DetailRow> = mrows
                .iter()
                .filter(|r| &r.class == class && r.curve_id == first_id)
                .copied()
                .collect();
            let svg = render_extrapolation(
                &curve_rows,
                &format!("{model} (seed {seed}) on a {class} curve"),
            );
            let path = out_dir.join(format!("extrapolation-{mslug}-{class}.svg"));
            std::fs::write(&path, svg).map_err(|e| e.to_string())?;
            written.push(path);
        }
        // per-class MSE vs step
        let mut per_class: BTreeMap<String, Vec<(i64, f64)>> = BTreeMap::new();
        for class in &classes {
            let mut by_step: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
            for r in mrows.iter().filter(|r| &r.class == class && r.step >= 1) {
                if let Some(e) = r.sq_error {
                    let slot = by_step.entry(r.step).or_insert((0.0, 0));
                    slot.0 += e;
                    slot.1 += 1;
                }
            }
            per_class.insert(
                class.clone(),
                by_step
                    .into_iter()
                    .map(|(s, (sum, n))| (s, sum / n as f64))
                    .collect(),
            );
        }
        let svg = render_mse_vs_step(&per_class, &format!("{model} (seed {seed}): MSE by step"));
        let path = out_dir.join(format!("mse-vs-step-{mslug}.svg"));
        std::fs::write(&path, svg).map_err(|e| e.to_string())?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_csv(with_std: bool) -> String {
        let mut s = format!("{DETAIL_HEADER}\n");
        for step in -2..=0 {
            s.push_str(&format!(
                "relational transformer,relational,0,lin,0,{step},,{},,\n",
                0.1 * step as f64
            ));
        }
        for step in 1..=3 {
            let std = if with_std { "0.05" } else { "" };
            s.push_str(&format!(
                "relational transformer,relational,0,lin,0,{step},{},{},0.0001,{std}\n",
                0.1 * step as f64 + 0.01,
                0.1 * step as f64
            ));
        }
        s
    }

    #[test]
    fn parse_and_render_with_band() {
        let rows = parse_detail_csv(&sample_csv(true)).unwrap();
        assert_eq!(rows.len(), 6);
        let refs: Vec<&DetailRow> = rows.iter().collect();
        let svg = render_extrapolation(&refs, "test");
        assert!(svg.contains("<polygon class=\"uncertainty-band\""));
        assert!(svg.contains("class=\"prediction\""));
        assert!(svg.contains("class=\"context\""));
    }

    #[test]
    fn no_band_without_uncertainty() {
        let rows = parse_detail_csv(&sample_csv(false)).unwrap();
        let refs: Vec<&DetailRow> = rows.iter().collect();
        let svg = render_extrapolation(&refs, "test");
        assert!(!svg.contains("polygon"));
        assert!(svg.contains("class=\"prediction\""));
    }

    #[test]
    fn empty_and_malformed_inputs_error() {
        assert!(parse_detail_csv("").is_err());
        assert!(parse_detail_csv(DETAIL_HEADER).is_err());
        assert!(parse_detail_csv("bogus header\n1,2,3").is_err());
        let bad = format!("{DETAIL_HEADER}\nonly,three,fields\n");
        assert!(parse_detail_csv(&bad).is_err());
    }
}
