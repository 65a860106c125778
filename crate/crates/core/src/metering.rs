//! Energy attribution for solver runs.
//!
//! Two backends are provided. The modeled backend prices the flop and load
//! counters of a [`SolveTrace`] with the linear-in-precision cost model and
//! is fully deterministic. The measured backend reads a package energy
//! counter (Linux powercap `energy_uj`) around repeated runs and reports the
//! median.

use std::collections::VecDeque;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::energymodel::EnergyModelParams;
use crate::newton::{OuterRecord, SolveError, SolveTrace};

/// Package-domain counter exposed by the intel-rapl powercap driver.
pub const DEFAULT_POWERCAP_PATH: &str = "/sys/class/powercap/intel-rapl:0/energy_uj";

/// Trials per measured data point.
pub const DEFAULT_TRIALS: usize = 31;

#[derive(Debug, thiserror::Error)]
pub enum MeteringError {
    #[error("energy counter unavailable at {path}: {source}")]
    CounterUnavailable { path: PathBuf, source: io::Error },
    #[error("permission denied reading energy counter {0}")]
    PermissionDenied(PathBuf),
    #[error("could not parse energy counter value `{0}`")]
    Parse(String),
    #[error("stub energy counter ran out of readings")]
    StubExhausted,
    #[error("trace record {0} carries no operation counts")]
    IncompleteTrace(usize),
    #[error("calibration failed: {0}")]
    CalibrationFailed(&'static str),
    #[error("trials must be at least 1")]
    InvalidTrials,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Backend {
    Modeled,
    Measured,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergySample {
    pub joules: f64,
    pub backend: Backend,
    /// Median wall time per trial, seconds. Zero for modeled samples.
    pub duration: f64,
    pub sample_count: usize,
    /// Population standard deviation of the trials. Zero for modeled samples.
    pub std_dev: f64,
}

impl EnergySample {
    pub fn modeled(joules: f64) -> Self {
        EnergySample { joules, backend: Backend::Modeled, duration: 0.0, sample_count: 1, std_dev: 0.0 }
    }
}

/// Per-operation costs at a given precision, from the linear scaling
/// `E_c(p) = p E_c`, `E_t(p) = p E_t`, `r(p) = p r`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostTable {
    bits: f64,
    e_c: f64,
    e_t: f64,
    r: f64,
}

impl CostTable {
    pub fn new(params: &EnergyModelParams, bits: u32) -> Self {
        CostTable { bits: bits as f64, e_c: params.e_c, e_t: params.e_t, r: params.r }
    }

    pub fn flop_energy(&self) -> f64 {
        self.bits * self.e_c
    }

    pub fn transfer_energy(&self) -> f64 {
        self.bits * self.e_t
    }

    pub fn miss_rate(&self) -> f64 {
        self.bits * self.r
    }

    /// Energy of `flops` computations and `loads` values moved. Evaluated in
    /// the same order as `iteration_energy`, so `k n` flops and `l n` loads
    /// price identically to one modeled iteration.
    pub fn energy(&self, flops: u64, loads: u64) -> f64 {
        let p = self.bits;
        flops as f64 * self.e_c * p + loads as f64 * self.r * self.e_t * p * p
    }
}

/// Modeled energy of the outer records.
pub fn modeled_energy_records(
    records: &[OuterRecord],
    params: &EnergyModelParams,
) -> Result<f64, MeteringError> {
    records.iter().enumerate().try_fold(0.0, |acc, (i, rec)| {
        if rec.counts.flops == 0 {
            return Err(MeteringError::IncompleteTrace(i));
        }
        let table = CostTable::new(params, rec.precision.bits());
        Ok(acc + table.energy(rec.counts.flops, rec.counts.loads))
    })
}

/// Modeled energy of a whole trace: the sum over its outer iterations.
pub fn modeled_energy(trace: &SolveTrace, params: &EnergyModelParams) -> Result<EnergySample, MeteringError> {
    modeled_energy_records(&trace.records, params).map(EnergySample::modeled)
}

/// A monotone energy counter in microjoules that wraps at `max_range_uj`.
pub trait EnergyCounter {
    fn read_uj(&mut self) -> Result<u64, MeteringError>;
    fn max_range_uj(&self) -> u64;
}

/// Energy consumed between two counter readings, accounting for one wrap.
pub fn energy_delta_uj(before: u64, after: u64, max_range_uj: u64) -> u64 {
    if after >= before {
        after - before
    } else {
        after + (max_range_uj - before)
    }
}

fn parse_uj(text: &str) -> Result<u64, MeteringError> {
    let t = text.trim();
    t.parse::<u64>().map_err(|_| MeteringError::Parse(t.to_string()))
}

fn read_counter_file(path: &Path) -> Result<u64, MeteringError> {
    match fs::read_to_string(path) {
        Ok(s) => parse_uj(&s),
        Err(e) if e.kind() == io::ErrorKind::PermissionDenied => {
            Err(MeteringError::PermissionDenied(path.to_path_buf()))
        }
        Err(source) => Err(MeteringError::CounterUnavailable { path: path.to_path_buf(), source }),
    }
}

/// Powercap energy file, e.g. `/sys/class/powercap/intel-rapl:0/energy_uj`.
/// The wrap value is read from the sibling `max_energy_range_uj`.
#[derive(Debug, Clone)]
pub struct PowercapCounter {
    path: PathBuf,
    max_range_uj: u64,
}

impl PowercapCounter {
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, MeteringError> {
        let path = path.into();
        read_counter_file(&path)?;
        let max_path = path.with_file_name("max_energy_range_uj");
        let max_range_uj = read_counter_file(&max_path)?;
        Ok(PowercapCounter { path, max_range_uj })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl EnergyCounter for PowercapCounter {
    fn read_uj(&mut self) -> Result<u64, MeteringError> {
        read_counter_file(&self.path)
    }

    fn max_range_uj(&self) -> u64 {
        self.max_range_uj
    }
}

/// Replays a fixed sequence of readings. Used for testing.
#[derive(Debug, Clone)]
pub struct StubCounter {
    readings: VecDeque<u64>,
    max_range_uj: u64,
}

impl StubCounter {
    pub fn from_readings(readings: impl IntoIterator<Item = u64>, max_range_uj: u64) -> Self {
        StubCounter { readings: readings.into_iter().collect(), max_range_uj }
    }

    /// Newline-separated decimal microjoule readings; blank lines are skipped.
    pub fn from_file(path: &Path, max_range_uj: u64) -> Result<Self, MeteringError> {
        let text = fs::read_to_string(path)
            .map_err(|source| MeteringError::CounterUnavailable { path: path.to_path_buf(), source })?;
        let readings = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(parse_uj)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self::from_readings(readings, max_range_uj))
    }
}

impl EnergyCounter for StubCounter {
    fn read_uj(&mut self) -> Result<u64, MeteringError> {
        self.readings.pop_front().ok_or(MeteringError::StubExhausted)
    }

    fn max_range_uj(&self) -> u64 {
        self.max_range_uj
    }
}

// Only one measurement may be in flight per process.
static MEASURE_LOCK: Mutex<()> = Mutex::new(());

fn median(sorted: &[f64]) -> f64 {
    let m = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[m]
    } else {
        0.5 * (sorted[m - 1] + sorted[m])
    }
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Run `action` `trials` times, reading the counter around each run, and
/// return the median energy with the spread of the samples.
pub fn measured_energy<C, F, R>(
    counter: &mut C,
    trials: usize,
    mut action: F,
) -> Result<(EnergySample, Vec<R>), MeteringError>
where
    C: EnergyCounter + ?Sized,
    F: FnMut() -> R,
{
    if trials == 0 {
        return Err(MeteringError::InvalidTrials);
    }
    let _guard = MEASURE_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let max = counter.max_range_uj();
    let mut joules = Vec::with_capacity(trials);
    let mut seconds = Vec::with_capacity(trials);
    let mut outputs = Vec::with_capacity(trials);
    for _ in 0..trials {
        let before = counter.read_uj()?;
        let start = Instant::now();
        outputs.push(action());
        let elapsed = start.elapsed().as_secs_f64();
        let after = counter.read_uj()?;
        joules.push(energy_delta_uj(before, after, max) as f64 / 1e6);
        seconds.push(elapsed);
    }
    let spread = std_dev(&joules);
    joules.sort_by(f64::total_cmp);
    seconds.sort_by(f64::total_cmp);
    let sample = EnergySample {
        joules: median(&joules),
        backend: Backend::Measured,
        duration: median(&seconds),
        sample_count: trials,
        std_dev: spread,
    };
    Ok((sample, outputs))
}

#[derive(Debug, thiserror::Error)]
pub enum MeterError {
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Metering(#[from] MeteringError),
}

/// Attributes energy to one solver phase.
pub trait EnergyMeter {
    fn backend(&self) -> Backend;

    fn measure(
        &mut self,
        run: &mut dyn FnMut() -> Result<SolveTrace, SolveError>,
    ) -> Result<(SolveTrace, EnergySample), MeterError>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeledMeter {
    pub params: EnergyModelParams,
}

impl ModeledMeter {
    pub fn new(params: EnergyModelParams) -> Self {
        ModeledMeter { params }
    }
}

impl EnergyMeter for ModeledMeter {
    fn backend(&self) -> Backend {
        Backend::Modeled
    }

    fn measure(
        &mut self,
        run: &mut dyn FnMut() -> Result<SolveTrace, SolveError>,
    ) -> Result<(SolveTrace, EnergySample), MeterError> {
        let trace = run()?;
        let sample = modeled_energy(&trace, &self.params)?;
        Ok((trace, sample))
    }
}

/// Hardware meter: repeats each phase `trials` times against a counter.
#[derive(Debug, Clone)]
pub struct MeasuredMeter<C> {
    pub counter: C,
    pub trials: usize,
}

impl<C: EnergyCounter> MeasuredMeter<C> {
    pub fn new(counter: C, trials: usize) -> Self {
        MeasuredMeter { counter, trials }
    }
}

impl<C: EnergyCounter> EnergyMeter for MeasuredMeter<C> {
    fn backend(&self) -> Backend {
        Backend::Measured
    }

    fn measure(
        &mut self,
        run: &mut dyn FnMut() -> Result<SolveTrace, SolveError>,
    ) -> Result<(SolveTrace, EnergySample), MeterError> {
        let (sample, mut traces) = measured_energy(&mut self.counter, self.trials, run)?;
        let trace = traces.pop().expect("at least one trial")?;
        Ok((trace, sample))
    }
}

/// One measured run used to fit the cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub bits: u32,
    pub flops: f64,
    pub loads: f64,
    pub outer_iterations: usize,
    pub n: usize,
    pub joules: f64,
}

impl CalibrationSample {
    pub fn from_trace(trace: &SolveTrace, n: usize, joules: f64) -> Self {
        let c = trace.total_counts();
        CalibrationSample {
            bits: trace.precision.bits(),
            flops: c.flops as f64,
            loads: c.loads as f64,
            outer_iterations: trace.records.len(),
            n,
            joules,
        }
    }
}

/// Least-squares fit of `E_c` and `r E_t` from
/// `joules = flops p E_c + loads p² (r E_t)`.
///
/// Only the product `r E_t` is identifiable; `r` is held at `r_prior` and
/// `E_t` absorbs the rest. `k` and `l` are the per-unknown, per-iteration
/// counts of the first sample.
pub fn calibrate_params(samples: &[CalibrationSample], r_prior: f64) -> Result<EnergyModelParams, MeteringError> {
    if samples.len() < 2 {
        return Err(MeteringError::CalibrationFailed("need at least two samples"));
    }
    if !(r_prior > 0.0 && r_prior.is_finite()) {
        return Err(MeteringError::CalibrationFailed("miss-rate prior must be positive"));
    }
    let rows: Vec<(f64, f64, f64)> = samples
        .iter()
        .map(|s| {
            let p = s.bits as f64;
            (s.flops * p, s.loads * p * p, s.joules)
        })
        .collect();
    // Column scaling keeps the normal equations well conditioned.
    let s1 = rows.iter().map(|r| r.0 * r.0).sum::<f64>().sqrt();
    let s2 = rows.iter().map(|r| r.1 * r.1).sum::<f64>().sqrt();
    if !(s1 > 0.0 && s2 > 0.0) {
        return Err(MeteringError::CalibrationFailed("samples carry no counts"));
    }
    let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x1, x2, y) in &rows {
        let (u, v) = (x1 / s1, x2 / s2);
        a11 += u * u;
        a12 += u * v;
        a22 += v * v;
        b1 += u * y;
        b2 += v * y;
    }
    let det = a11 * a22 - a12 * a12;
    if !(det.abs() > 1e-12) {
        return Err(MeteringError::CalibrationFailed("singular fit (samples are collinear)"));
    }
    let e_c = (a22 * b1 - a12 * b2) / det / s1;
    let rt = (a11 * b2 - a12 * b1) / det / s2;
    if !(e_c > 0.0 && rt >= 0.0 && e_c.is_finite() && rt.is_finite()) {
        return Err(MeteringError::CalibrationFailed("fit produced non-physical costs"));
    }
    let first = &samples[0];
    let per_unknown = (first.outer_iterations.max(1) * first.n.max(1)) as f64;
    Ok(EnergyModelParams {
        k: first.flops / per_unknown,
        l: first.loads / per_unknown,
        e_c,
        e_t: rt / r_prior,
        r: r_prior,
        n: first.n.max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_single_trial() {
        let mut c = StubCounter::from_readings([0, 5_000_000], u64::MAX);
        let (s, _) = measured_energy(&mut c, 1, || ()).unwrap();
        assert_eq!(s.joules, 5.0);
        assert_eq!(s.std_dev, 0.0);
        assert_eq!(s.sample_count, 1);
        assert_eq!(s.backend, Backend::Measured);
    }

    #[test]
    fn stub_median() {
        let mut c = StubCounter::from_readings([0, 4_000_000, 10, 5_000_010, 20, 6_000_020], u64::MAX);
        let (s, _) = measured_energy(&mut c, 3, || ()).unwrap();
        assert_eq!(s.joules, 5.0);
        assert_eq!(s.std_dev, (2.0f64 / 3.0).sqrt());
    }

    #[test]
    fn wraparound() {
        assert_eq!(energy_delta_uj(9, 3, 10), 4);
        assert_eq!(energy_delta_uj(3, 9, 10), 6);
        let mut c = StubCounter::from_readings([9, 3], 10);
        let (s, _) = measured_energy(&mut c, 1, || ()).unwrap();
        assert_eq!(s.joules, 4.0 / 1e6);
    }

    #[test]
    fn stub_exhaustion_and_zero_trials() {
        let mut c = StubCounter::from_readings([1], 10);
        assert!(matches!(measured_energy(&mut c, 1, || ()), Err(MeteringError::StubExhausted)));
        assert!(matches!(measured_energy(&mut c, 0, || ()), Err(MeteringError::InvalidTrials)));
    }

    #[test]
    fn missing_powercap_file() {
        let err = PowercapCounter::open("/nonexistent/energy_uj").unwrap_err();
        assert!(matches!(err, MeteringError::CounterUnavailable { .. }));
    }

    #[test]
    fn single_sample_calibration_fails() {
        let s = CalibrationSample { bits: 32, flops: 1e6, loads: 1e6, outer_iterations: 1, n: 10, joules: 1.0 };
        assert!(matches!(calibrate_params(&[s], 1e-4), Err(MeteringError::CalibrationFailed(_))));
    }
}
