//! Multichannel recordings, band-pass filtering, fixed-size windowing and
//! sample covariance estimation.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::Label;
use crate::spd::{regularize_spd, Mat, SpdMatrix, SymMatrix};

/// Default ridge factor applied to covariances that fail SPD validation.
pub const DEFAULT_COV_EPS: f64 = 1e-6;
pub const DEFAULT_FILTER_ORDER: usize = 5;

#[derive(Clone, Debug, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub label: Label,
    pub sample_rate: f64,
    pub channel_names: Vec<String>,
    /// `samples[channel][t]`.
    pub samples: Vec<Vec<f64>>,
}

impl Recording {
    pub fn new(
        subject_id: impl Into<String>,
        label: Label,
        sample_rate: f64,
        channel_names: Vec<String>,
        samples: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let rec = Recording {
            subject_id: subject_id.into(),
            label,
            sample_rate,
            channel_names,
            samples,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::Data(format!(
                "{}: sample rate must be positive, got {}",
                self.subject_id, self.sample_rate
            )));
        }
        if self.channel_names.len() < 2 {
            return Err(Error::Data(format!(
                "{}: need at least 2 channels, got {}",
                self.subject_id,
                self.channel_names.len()
            )));
        }
        if self.samples.len() != self.channel_names.len() {
            return Err(Error::Data(format!(
                "{}: {} channel names but {} sample rows",
                self.subject_id,
                self.channel_names.len(),
                self.samples.len()
            )));
        }
        let n = self.samples[0].len();
        if n < 2 {
            return Err(Error::Data(format!("{}: need at least 2 samples", self.subject_id)));
        }
        for (name, ch) in self.channel_names.iter().zip(&self.samples) {
            if ch.len() != n {
                return Err(Error::Data(format!(
                    "{}: channel {name} has {} samples, expected {n}",
                    self.subject_id,
                    ch.len()
                )));
            }
            if ch.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "{}: channel {name} has non-finite samples",
                    self.subject_id
                )));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len_samples(&self) -> usize {
        self.samples.first().map_or(0, Vec::len)
    }

    /// Recording length in seconds.
    pub fn duration(&self) -> f64 {
        self.len_samples() as f64 / self.sample_rate
    }

    /// Same metadata, new sample block.
    pub fn with_samples(&self, samples: Vec<Vec<f64>>) -> Recording {
        Recording {
            samples,
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Recording {
        Recording {
            subject_id: self.subject_id.clone(),
            label: self.label,
            sample_rate: self.sample_rate,
            channel_names: self.channel_names.clone(),
            samples: Vec::new(),
        }
    }

    /// Drop the named channels. Unknown names are ignored.
    pub fn without_channels(&self, excluded: &[String]) -> Result<Recording> {
        let (names, samples): (Vec<_>, Vec<_>) = self
            .channel_names
            .iter()
            .zip(&self.samples)
            .filter(|(n, _)| !excluded.contains(n))
            .map(|(n, s)| (n.clone(), s.clone()))
            .unzip();
        Recording::new(self.subject_id.clone(), self.label, self.sample_rate, names, samples)
    }

    /// Read the CSV body (header row of channel names, one sample per row).
    pub fn read_csv<R: Read>(
        reader: R,
        subject_id: impl Into<String>,
        label: Label,
        sample_rate: f64,
        origin: &str,
    ) -> Result<Recording> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| csv_error(origin, e))?
            .iter()
            .map(str::to_owned)
            .collect::<Vec<_>>();
        let mut samples = vec![Vec::new(); headers.len()];
        for record in rdr.records() {
            let record = record.map_err(|e| csv_error(origin, e))?;
            let line = record.position().map_or(0, |p| p.line());
            for (col, cell) in record.iter().enumerate() {
                let v: f64 = cell.parse().map_err(|_| {
                    Error::Data(format!(
                        "{origin}:{line}: non-numeric value {cell:?} in column {}",
                        headers[col]
                    ))
                })?;
                samples[col].push(v);
            }
        }
        Recording::new(subject_id, label, sample_rate, headers, samples).map_err(|e| e.context(origin.to_owned()))
    }

    pub fn read_csv_file(path: &Path, subject_id: &str, label: Label, sample_rate: f64) -> Result<Recording> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Recording::read_csv(
            std::io::BufReader::new(file),
            subject_id,
            label,
            sample_rate,
            &path.display().to_string(),
        )
    }

    /// Write the CSV body. Floats use Rust's shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Data(format!("csv write failed: {e}"));
        w.write_record(&self.channel_names).map_err(io)?;
        let mut row = Vec::with_capacity(self.channels());
        for t in 0..self.len_samples() {
            row.clear();
            row.extend(self.samples.iter().map(|ch| ch[t].to_string()));
            w.write_record(&row).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Data(format!("csv flush failed: {e}")))?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

fn csv_error(origin: &str, e: csv::Error) -> Error {
    match e.kind() {
        csv::ErrorKind::UnequalLengths { pos, expected_len, len } => Error::Data(format!(
            "{origin}:{}: ragged row with {len} fields, expected {expected_len}",
            pos.as_ref().map_or(0, |p| p.line())
        )),
        _ => Error::Data(format!("{origin}: {e}")),
    }
}

/// Frequency band in Hz.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSpec {
    pub name: String,
    pub low: f64,
    pub high: f64,
}

impl BandSpec {
    pub fn new(name: impl Into<String>, low: f64, high: f64) -> Self {
        BandSpec {
            name: name.into(),
            low,
            high,
        }
    }

    pub fn validate(&self, sample_rate: f64) -> Result<()> {
        if !(self.low > 0.0 && self.low < self.high && self.high < sample_rate / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "band {} [{}, {}] Hz violates 0 < low < high < Nyquist ({} Hz)",
                self.name,
                self.low,
                self.high,
                sample_rate / 2.0
            )));
        }
        Ok(())
    }

    /// Theta, alpha, beta, gamma and the 3–50 Hz broadband.
    pub fn standard_bands() -> Vec<BandSpec> {
        vec![
            BandSpec::new("theta", 3.0, 8.0),
            BandSpec::new("alpha", 8.0, 12.0),
            BandSpec::new("beta", 12.0, 28.0),
            BandSpec::new("gamma", 28.0, 50.0),
            BandSpec::broadband(),
        ]
    }

    pub fn broadband() -> BandSpec {
        BandSpec::new("3-50Hz", 3.0, 50.0)
    }
}

/// Cascade of second-order sections `[b0, b1, b2, a1, a2]` (a0 = 1).
#[derive(Clone, Debug, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<[f64; 5]>,
}

impl SosFilter {
    pub fn response(&self, z: Complex<f64>) -> Complex<f64> {
        let zi = z.inv();
        let zi2 = zi * zi;
        self.sections.iter().fold(Complex::new(1.0, 0.0), |acc, s| {
            let num = zi2 * s[2] + zi * s[1] + s[0];
            let den = zi2 * s[4] + zi * s[3] + 1.0;
            acc * num / den
        })
    }

    /// Causal filtering from zero initial state, transposed direct form II per section.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for s in &self.sections {
            let (mut z1, mut z2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let input = *v;
                let out = s[0] * input + z1;
                z1 = s[1] * input - s[3] * out + z2;
                z2 = s[2] * input - s[4] * out;
                *v = out;
            }
        }
        y
    }
}

/// Digital Butterworth band-pass of the given prototype order: `2·order` poles,
/// realized as `order` second-order sections. Bilinear transform with band-edge
/// prewarping; unit gain at the band's (prewarped) geometric center.
pub fn butterworth_bandpass_sos(order: usize, low: f64, high: f64, sample_rate: f64) -> Result<SosFilter> {
    if order == 0 {
        return Err(Error::InvalidArgument("filter order must be positive".into()));
    }
    BandSpec::new("", low, high).validate(sample_rate)?;
    let fs2 = 2.0 * sample_rate;
    let warp = |f: f64| fs2 * (std::f64::consts::PI * f / sample_rate).tan();
    let (wl, wh) = (warp(low), warp(high));
    let bw = wh - wl;
    let w0 = (wl * wh).sqrt();

    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = std::f64::consts::PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex::from_polar(1.0, theta);
        let a = p * (bw / 2.0);
        let r = (a * a - w0 * w0).sqrt();
        for s in [a + r, a - r] {
            poles.push((s + fs2) / (-s + fs2));
        }
    }

    let scale = poles.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let imag_tol = 1e-12 * scale;
    let mut upper: Vec<Complex<f64>> = poles.iter().copied().filter(|p| p.im > imag_tol).collect();
    let mut real: Vec<f64> = poles.iter().filter(|p| p.im.abs() <= imag_tol).map(|p| p.re).collect();
    upper.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    real.sort_by(f64::total_cmp);
    if real.len() % 2 != 0 || upper.len() + real.len() / 2 != order {
        return Err(Error::Numerical(format!(
            "unexpected pole structure in band-pass design: {} complex pairs, {} real poles",
            upper.len(),
            real.len()
        )));
    }

    let mut sections: Vec<[f64; 5]> = upper
        .iter()
        .map(|p| [1.0, 0.0, -1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    for pair in real.chunks(2) {
        sections.push([1.0, 0.0, -1.0, -(pair[0] + pair[1]), pair[0] * pair[1]]);
    }

    let mut filter = SosFilter { sections };
    let center = 2.0 * (w0 / fs2).atan();
    let gain = filter.response(Complex::from_polar(1.0, center)).norm();
    if !(gain.is_finite() && gain > 0.0) {
        return Err(Error::Numerical(format!("degenerate band-pass gain {gain}")));
    }
    for c in &mut filter.sections[0][..3] {
        *c /= gain;
    }
    Ok(filter)
}

/// Per-channel causal Butterworth band-pass; metadata is preserved.
pub fn butterworth_bandpass(rec: &Recording, band: &BandSpec, order: usize) -> Result<Recording> {
    band.validate(rec.sample_rate)?;
    let filter = butterworth_bandpass_sos(order, band.low, band.high, rec.sample_rate)?;
    Ok(rec.with_samples(rec.samples.iter().map(|ch| filter.apply(ch)).collect()))
}

/// A time window `[start, start + len)` of a recording, in samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start_sample: usize,
    pub len_samples: usize,
}

impl Segment {
    pub fn new(start_sample: usize, len_samples: usize) -> Self {
        Segment {
            start_sample,
            len_samples,
        }
    }

    pub fn end_sample(&self) -> usize {
        self.start_sample + self.len_samples
    }

    pub fn start(&self, sample_rate: f64) -> f64 {
        self.start_sample as f64 / sample_rate
    }

    pub fn duration(&self, sample_rate: f64) -> f64 {
        self.len_samples as f64 / sample_rate
    }

    pub fn covariance(&self, rec: &Recording, center: bool, eps: f64) -> Result<CovarianceEstimate> {
        segment_covariance(rec, self, center, eps)
    }
}

pub(crate) fn seconds_to_samples(seconds: f64, sample_rate: f64) -> usize {
    (seconds * sample_rate).round() as usize
}

/// Windows of `window` seconds stepping by `window·(1 − overlap)`; the trailing
/// partial window is discarded.
pub fn fixed_segments(rec: &Recording, window: f64, overlap: f64) -> Result<Vec<Segment>> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window}")));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidArgument(format!("overlap must lie in [0, 1), got {overlap}")));
    }
    let win = seconds_to_samples(window, rec.sample_rate);
    let total = rec.len_samples();
    if win > total {
        return Err(Error::InvalidArgument(format!(
            "window of {window} s exceeds recording length {} s",
            rec.duration()
        )));
    }
    if win < 2 {
        return Err(Error::InvalidArgument(format!("window of {window} s spans fewer than 2 samples")));
    }
    let step = ((win as f64) * (1.0 - overlap)).round().max(1.0) as usize;
    let count = (total - win) / step + 1;
    Ok((0..count).map(|k| Segment::new(k * step, win)).collect())
}

#[derive(Clone, Debug)]
pub struct CovarianceEstimate {
    pub matrix: SpdMatrix,
    /// The raw estimate failed SPD validation and was ridge-regularized.
    pub regularized: bool,
}

/// `C = E·Eᵀ/(n − 1)` over the segment's samples.
pub fn segment_covariance(rec: &Recording, seg: &Segment, center: bool, eps: f64) -> Result<CovarianceEstimate> {
    if seg.len_samples < 2 {
        return Err(Error::InvalidArgument(format!(
            "segment spans {} samples, need at least 2",
            seg.len_samples
        )));
    }
    if seg.end_sample() > rec.len_samples() {
        return Err(Error::InvalidArgument(format!(
            "segment [{}, {}) exceeds recording of {} samples",
            seg.start_sample,
            seg.end_sample(),
            rec.len_samples()
        )));
    }
    let d = rec.channels();
    let n = seg.len_samples;
    let block = Mat::from_fn(d, n, |c, t| rec.samples[c][seg.start_sample + t]);
    covariance_of_block(block, center, eps)
}

pub(crate) fn covariance_of_block(mut block: Mat, center: bool, eps: f64) -> Result<CovarianceEstimate> {
    let n = block.ncols();
    if center {
        for mut row in block.row_iter_mut() {
            let mean = row.sum() / n as f64;
            row.add_scalar_mut(-mean);
        }
    }
    let raw = (&block * block.transpose()) / (n as f64 - 1.0);
    let sym = SymMatrix::new((&raw + raw.transpose()) * 0.5)?;
    match SpdMatrix::new(sym.as_matrix().clone()) {
        Ok(matrix) => Ok(CovarianceEstimate {
            matrix,
            regularized: false,
        }),
        Err(Error::Domain(_)) => Ok(CovarianceEstimate {
            matrix: regularize_spd(&sym, eps)?,
            regularized: true,
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(samples: Vec<Vec<f64>>, rate: f64) -> Recording {
        let names = (0..samples.len()).map(|i| format!("ch{i}")).collect();
        Recording::new("s", Label::Positive, rate, names, samples).unwrap()
    }

    #[test]
    fn window_counts() {
        let r = rec(vec![vec![0.0; 1000]; 2], 100.0);
        let segs = fixed_segments(&r, 2.0, 0.5).unwrap();
        assert_eq!(segs.len(), 9);
        let starts: Vec<f64> = segs.iter().map(|s| s.start(100.0)).collect();
        assert_eq!(starts, (0..9).map(f64::from).collect::<Vec<_>>());
        assert!(segs.windows(2).all(|w| w[1].start_sample - w[0].start_sample == w[0].len_samples / 2));

        let r = rec(vec![vec![0.0; 200]; 2], 100.0);
        assert_eq!(fixed_segments(&r, 2.0, 0.0).unwrap().len(), 1);
        assert!(fixed_segments(&r, 2.5, 0.0).is_err());
        assert!(fixed_segments(&r, 1.0, 1.0).is_err());
    }

    #[test]
    fn rank_one_covariance_is_regularized() {
        let r = rec(vec![vec![1.0, -1.0], vec![2.0, -2.0]], 10.0);
        let est = segment_covariance(&r, &Segment::new(0, 2), false, 1e-6).unwrap();
        assert!(est.regularized);
        // E·Eᵀ = [[2, 4], [4, 8]], trace/d = 5, shift = 1e-6·5 (+ |λ_min| ≈ 0)
        let m = est.matrix.as_matrix();
        assert!((m[(0, 0)] - 2.0).abs() < 1e-4);
        assert!((m[(0, 1)] - 4.0).abs() < 1e-12);
        assert!((m[(1, 1)] - 8.0).abs() < 1e-4);
        assert!(est.matrix.eigen().min() > 0.0);
    }

    #[test]
    fn constant_channel_with_centering_is_flagged() {
        let r = rec(vec![vec![3.0; 50], (0..50).map(|t| (t as f64 * 0.7).sin()).collect()], 10.0);
        let est = segment_covariance(&r, &Segment::new(0, 50), true, 1e-6).unwrap();
        assert!(est.regularized);
        let raw = segment_covariance(&r, &Segment::new(0, 50), false, 1e-6).unwrap();
        assert!(!raw.regularized);
    }

    #[test]
    fn too_short_segment_errors() {
        let r = rec(vec![vec![1.0, 2.0, 3.0]; 2], 10.0);
        assert!(segment_covariance(&r, &Segment::new(0, 1), false, 1e-6).is_err());
        assert!(segment_covariance(&r, &Segment::new(2, 2), false, 1e-6).is_err());
    }

    #[test]
    fn nyquist_violations_rejected() {
        assert!(butterworth_bandpass_sos(5, 3.0, 50.0, 100.0).is_err());
        assert!(butterworth_bandpass_sos(5, 8.0, 3.0, 256.0).is_err());
        assert!(butterworth_bandpass_sos(5, 0.0, 3.0, 256.0).is_err());
        assert!(butterworth_bandpass_sos(0, 3.0, 8.0, 256.0).is_err());
    }

    #[test]
    fn filter_is_stable_with_order_sections() {
        for (lo, hi) in [(3.0, 8.0), (8.0, 12.0), (12.0, 28.0), (28.0, 50.0), (3.0, 50.0)] {
            let f = butterworth_bandpass_sos(5, lo, hi, 256.0).unwrap();
            assert_eq!(f.sections.len(), 5);
            for s in &f.sections {
                // roots of z² + a1 z + a2 inside the unit circle
                assert!(s[4].abs() < 1.0 && s[3].abs() < 1.0 + s[4]);
            }
        }
    }

    #[test]
    fn dc_is_rejected() {
        let n = 4096;
        let r = rec(vec![vec![1.0; n]; 2], 256.0);
        let y = butterworth_bandpass(&r, &BandSpec::new("theta", 3.0, 8.0), 5).unwrap();
        assert!(y.samples[0][n - 512..].iter().all(|v| v.abs() <= 1e-3));
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let ragged = "a,b\n1,2\n3\n";
        let err = Recording::read_csv(ragged.as_bytes(), "s", Label::Positive, 10.0, "x.csv").unwrap_err();
        assert!(err.to_string().contains("x.csv:3"), "{err}");
        let bad = "a,b\n1,2\n3,zz\n";
        let err = Recording::read_csv(bad.as_bytes(), "s", Label::Positive, 10.0, "x.csv").unwrap_err();
        assert!(err.to_string().contains("x.csv:3") && err.to_string().contains("zz"), "{err}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let r = rec(vec![vec![0.1, -2.5e-7, 3.0], vec![1.0 / 3.0, 7.0, -0.0]], 10.0);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        let back = Recording::read_csv(buf.as_slice(), "s", Label::Positive, 10.0, "mem").unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn channel_exclusion() {
        let r = rec(vec![vec![1.0, 2.0]; 4], 10.0);
        let r2 = r.without_channels(&["ch1".into(), "zz".into()]).unwrap();
        assert_eq!(r2.channel_names, vec!["ch0", "ch2", "ch3"]);
    }
}
