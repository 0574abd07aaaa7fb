//! Plain-text artifact formats.
//!
//! Two precision regimes, on purpose:
//! - datasets, loss ledgers, network parameters, and embeddings are
//!   *artifacts*: floats use Rust's shortest-round-trip formatting, so a
//!   parse reproduces the values exactly;
//! - histories and result tables are *tabular output*: floats carry six
//!   significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::curriculum::{LossLedger, SampleWeights};
use crate::datagen::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::mlp::{Layer, Mlp};
use crate::pmd::{AdversarialNet, ClassifierRecord, TrainRecord};

/// `%.{sig}g`-style formatting: positional for moderate exponents,
/// scientific otherwise, trailing zeros trimmed.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if exp < -4 || exp >= sig as i32 {
        let s = format!("{:.*e}", sig.saturating_sub(1), x);
        trim_mantissa(&s)
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        trim_trailing_zeros(&s)
    }
}

fn trim_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

fn trim_mantissa(s: &str) -> String {
    match s.split_once('e') {
        Some((mantissa, exp)) => format!("{}e{exp}", trim_trailing_zeros(mantissa)),
        None => s.to_string(),
    }
}

fn parse_f64(token: &str, what: &str) -> Result<f64> {
    token
        .parse::<f64>()
        .map_err(|_| Error::parse(format!("bad float '{token}' in {what}")))
}

fn parse_usize(token: &str, what: &str) -> Result<usize> {
    token
        .parse::<usize>()
        .map_err(|_| Error::parse(format!("bad integer '{token}' in {what}")))
}

fn parse_flag(token: &str, what: &str) -> Result<bool> {
    match token {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(Error::parse(format!("bad flag '{token}' in {what}"))),
    }
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

/// Columnar text: header `x0,...,x{d-1},y_clean,y_obs,label_noisy,
/// feature_noisy`, one sample per row, observed features at full precision.
pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    for j in 0..ds.dim() {
        let _ = write!(out, "x{j},");
    }
    out.push_str("y_clean,y_obs,label_noisy,feature_noisy\n");
    for s in &ds.samples {
        for v in &s.x {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(
            out,
            "{},{},{},{}",
            s.y_clean,
            s.y_obs,
            u8::from(s.label_noisy),
            u8::from(s.feature_noisy)
        );
    }
    fs::write(path, out)?;
    Ok(())
}

/// Parse a dataset file. The clean feature copy is not serialized, so the
/// reloaded samples carry their observed features as the clean copy too;
/// diagnostics that need true clean features must run in-process. The class
/// count is inferred from the labels.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty dataset file".to_string()))?;
    let dim = header.split(',').filter(|c| c.starts_with('x')).count();
    if dim == 0 {
        return Err(Error::parse(
            "dataset header has no feature columns".to_string(),
        ));
    }
    let mut samples = Vec::new();
    let mut classes = 0usize;
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 4 {
            return Err(Error::parse(format!(
                "dataset row {lineno}: {} cells, expected {}",
                cells.len(),
                dim + 4
            )));
        }
        let mut x = Vec::with_capacity(dim);
        for c in &cells[..dim] {
            x.push(parse_f64(c, "dataset features")?);
        }
        let y_clean = parse_usize(cells[dim], "y_clean")?;
        let y_obs = parse_usize(cells[dim + 1], "y_obs")?;
        let label_noisy = parse_flag(cells[dim + 2], "label_noisy")?;
        let feature_noisy = parse_flag(cells[dim + 3], "feature_noisy")?;
        classes = classes.max(y_clean + 1).max(y_obs + 1);
        samples.push(Sample {
            x_clean: x.clone(),
            x,
            y_clean,
            y_obs,
            label_noisy,
            feature_noisy,
        });
    }
    Dataset::new(samples, classes, dim)
}

// ---------------------------------------------------------------------------
// Loss ledgers and sample weights
// ---------------------------------------------------------------------------

pub fn write_ledger(ledger: &LossLedger, path: &Path) -> Result<()> {
    let mut out = String::new();
    let cols: Vec<String> = (0..ledger.epochs()).map(|t| format!("loss_t{t}")).collect();
    out.push_str(&cols.join(","));
    out.push('\n');
    for i in 0..ledger.examples() {
        let row: Vec<String> = (0..ledger.epochs())
            .map(|t| format!("{}", ledger.loss(i, t)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_ledger(path: &Path) -> Result<LossLedger> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty ledger file".to_string()))?;
    let epochs = header.split(',').count();
    let mut data = Vec::new();
    let mut rows = 0usize;
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != epochs {
            return Err(Error::parse("ragged ledger row".to_string()));
        }
        for c in cells {
            data.push(parse_f64(c, "ledger")?);
        }
        rows += 1;
    }
    Ok(LossLedger::from_matrix(Matrix::from_vec(
        rows, epochs, data,
    )?))
}

pub fn write_weights(weights: &SampleWeights, path: &Path) -> Result<()> {
    let mut out = String::from("weight\n");
    for &w in &weights.w {
        out.push(if w { '1' } else { '0' });
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_weights(path: &Path) -> Result<SampleWeights> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let _header = lines.next();
    let mut w = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        w.push(parse_flag(line, "weights")?);
    }
    Ok(SampleWeights { w })
}

// ---------------------------------------------------------------------------
// Network parameters
// ---------------------------------------------------------------------------

fn write_mlp(out: &mut String, name: &str, mlp: &Mlp) {
    let _ = writeln!(out, "mlp {name} {}", mlp.layers().len());
    for layer in mlp.layers() {
        let _ = writeln!(out, "layer {} {}", layer.in_dim(), layer.out_dim());
        out.push('w');
        for v in layer.weight.data() {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
        out.push('b');
        for v in &layer.bias {
            let _ = write!(out, " {v}");
        }
        out.push('\n');
    }
}

fn read_mlp<'a>(lines: &mut std::iter::Peekable<std::str::Lines<'a>>, name: &str) -> Result<Mlp> {
    let head = lines
        .next()
        .ok_or_else(|| Error::parse(format!("missing mlp section '{name}'")))?;
    let mut toks = head.split_whitespace();
    if toks.next() != Some("mlp") || toks.next() != Some(name) {
        return Err(Error::parse(format!("expected 'mlp {name}', got '{head}'")));
    }
    let layer_count = parse_usize(
        toks.next()
            .ok_or_else(|| Error::parse("missing layer count".to_string()))?,
        "layer count",
    )?;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let shape = lines
            .next()
            .ok_or_else(|| Error::parse("missing layer header".to_string()))?;
        let mut toks = shape.split_whitespace();
        if toks.next() != Some("layer") {
            return Err(Error::parse(format!("expected 'layer', got '{shape}'")));
        }
        let rows = parse_usize(toks.next().unwrap_or(""), "layer in dim")?;
        let cols = parse_usize(toks.next().unwrap_or(""), "layer out dim")?;
        let wline = lines
            .next()
            .ok_or_else(|| Error::parse("missing weight row".to_string()))?;
        let mut wtoks = wline.split_whitespace();
        if wtoks.next() != Some("w") {
            return Err(Error::parse("expected weight row".to_string()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for t in wtoks {
            data.push(parse_f64(t, "weights")?);
        }
        let bline = lines
            .next()
            .ok_or_else(|| Error::parse("missing bias row".to_string()))?;
        let mut btoks = bline.split_whitespace();
        if btoks.next() != Some("b") {
            return Err(Error::parse("expected bias row".to_string()));
        }
        let mut bias = Vec::with_capacity(cols);
        for t in btoks {
            bias.push(parse_f64(t, "bias")?);
        }
        layers.push(Layer {
            weight: Matrix::from_vec(rows, cols, data)?,
            bias,
        });
    }
    Mlp::new(layers)
}

pub fn write_adversarial_net(net: &AdversarialNet, path: &Path) -> Result<()> {
    let mut out = String::new();
    write_mlp(&mut out, "psi", &net.psi);
    write_mlp(&mut out, "f", &net.f);
    write_mlp(&mut out, "f_adv", &net.f_adv);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_adversarial_net(path: &Path) -> Result<AdversarialNet> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().peekable();
    let psi = read_mlp(&mut lines, "psi")?;
    let f = read_mlp(&mut lines, "f")?;
    let f_adv = read_mlp(&mut lines, "f_adv")?;
    AdversarialNet::new(psi, f, f_adv)
}

// ---------------------------------------------------------------------------
// Histories
// ---------------------------------------------------------------------------

pub fn write_rda_history(records: &[TrainRecord], path: &Path) -> Result<()> {
    let mut out = String::from(
        "iteration,tau_prime,source_ce,source_disparity,target_disparity,eval_accuracy\n",
    );
    for r in records {
        let eval = r.eval_accuracy.map(|a| fmt_sig(a, 6)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration,
            fmt_sig(r.tau_prime, 6),
            fmt_sig(r.source_ce, 6),
            fmt_sig(r.source_disparity, 6),
            fmt_sig(r.target_disparity, 6),
            eval
        );
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_classifier_history(records: &[ClassifierRecord], path: &Path) -> Result<()> {
    let mut out = String::from("iteration,source_ce,eval_accuracy\n");
    for r in records {
        let eval = r.eval_accuracy.map(|a| fmt_sig(a, 6)).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", r.iteration, fmt_sig(r.source_ce, 6), eval);
    }
    fs::write(path, out)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRow {
    pub embedding: Vec<f64>,
    pub domain: String,
    pub y_clean: usize,
    pub y_obs: usize,
    pub label_noisy: bool,
    pub feature_noisy: bool,
}

/// One row per sample: embedding coordinates (full precision), the domain
/// tag, labels, and noise flags. `embeds[i]` must align row-wise with
/// `sets[i]`.
pub fn write_embeddings(embeds: &[Matrix], sets: &[(&Dataset, &str)], path: &Path) -> Result<()> {
    if embeds.len() != sets.len() {
        return Err(Error::config(
            "embedding/dataset count mismatch".to_string(),
        ));
    }
    let dim = embeds.first().map_or(0, Matrix::cols);
    let mut out = String::new();
    for j in 0..dim {
        let _ = write!(out, "e{j},");
    }
    out.push_str("domain,y_clean,y_obs,label_noisy,feature_noisy\n");
    for (m, (ds, tag)) in embeds.iter().zip(sets) {
        if m.rows() != ds.len() || m.cols() != dim {
            return Err(Error::config("embedding shape mismatch".to_string()));
        }
        for (i, s) in ds.samples.iter().enumerate() {
            for v in m.row(i) {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(
                out,
                "{tag},{},{},{},{}",
                s.y_clean,
                s.y_obs,
                u8::from(s.label_noisy),
                u8::from(s.feature_noisy)
            );
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("empty embedding file".to_string()))?;
    let dim = header.split(',').filter(|c| c.starts_with('e')).count();
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 5 {
            return Err(Error::parse("ragged embedding row".to_string()));
        }
        let mut embedding = Vec::with_capacity(dim);
        for c in &cells[..dim] {
            embedding.push(parse_f64(c, "embedding")?);
        }
        rows.push(EmbeddingRow {
            embedding,
            domain: cells[dim].to_string(),
            y_clean: parse_usize(cells[dim + 1], "y_clean")?,
            y_obs: parse_usize(cells[dim + 2], "y_obs")?,
            label_noisy: parse_flag(cells[dim + 3], "label_noisy")?,
            feature_noisy: parse_flag(cells[dim + 4], "feature_noisy")?,
        });
    }
    Ok(rows)
}

/// Histogram report as CSV: one row per bin with edges and per-category
/// counts, plus a trailing per-category means row.
pub fn write_histogram_csv(hist: &crate::diagnostics::LossHistogram, path: &Path) -> Result<()> {
    let mut out = String::from("bin_lo,bin_hi,clean,label_noisy,feature_noisy,both\n");
    let bins = hist.counts[0].len();
    for b in 0..bins {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_sig(hist.edges[b], 6),
            fmt_sig(hist.edges[b + 1], 6),
            hist.counts[0][b],
            hist.counts[1][b],
            hist.counts[2][b],
            hist.counts[3][b]
        );
    }
    let means: Vec<String> = hist
        .means
        .iter()
        .map(|m| m.map(|v| fmt_sig(v, 6)).unwrap_or_default())
        .collect();
    let _ = writeln!(out, "mean,,{}", means.join(","));
    fs::write(path, out)?;
    Ok(())
}

/// Gnuplot-friendly histogram dump: bin centers, then one count column per
/// noise category.
pub fn write_histogram_gnuplot(
    hist: &crate::diagnostics::LossHistogram,
    path: &Path,
) -> Result<()> {
    let mut out = String::from("# bin_center clean label_noisy feature_noisy both\n");
    let bins = hist.counts[0].len();
    for b in 0..bins {
        let center = 0.5 * (hist.edges[b] + hist.edges[b + 1]);
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            fmt_sig(center, 6),
            hist.counts[0][b],
            hist.counts[1][b],
            hist.counts[2][b],
            hist.counts[3][b]
        );
    }
    fs::write(path, out)?;
    Ok(())
}
