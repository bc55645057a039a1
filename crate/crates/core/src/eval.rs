//! Survival evaluation: concordance index, Kaplan-Meier curves, median-risk
//! stratification and the two-group log-rank test.

use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::scalar::{cmp, widen, Scalar};

/// One sample's predicted risk and observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSample<T> {
    pub sample_id: String,
    pub risk: T,
    pub event_time: T,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CIndexMode {
    /// Pairs with `T_i < T_j` where the earlier sample `i` is uncensored.
    #[default]
    Harrell,
    /// Pairs with `T_i < T_j` where the later sample `j` is uncensored.
    Literal,
}

/// Fenwick tree over rank positions.
struct Fenwick(Vec<u64>);

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick(vec![0; n + 1])
    }

    fn add(&mut self, pos: usize) {
        let mut i = pos + 1;
        while i < self.0.len() {
            self.0[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    /// Count of inserted positions `< pos`.
    fn prefix(&self, pos: usize) -> u64 {
        let mut i = pos;
        let mut s = 0;
        while i > 0 {
            s += self.0[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
}

/// Integer pair counts behind a C-index value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PairCounts {
    pub comparable: u64,
    pub concordant: u64,
    pub tied_risk: u64,
}

impl PairCounts {
    /// `(concordant + tied/2) / comparable`.
    pub fn value(&self) -> Result<f64> {
        if self.comparable == 0 {
            return Err(Error::Undefined("C-index (no comparable pairs)"));
        }
        Ok((2 * self.concordant + self.tied_risk) as f64 / (2 * self.comparable) as f64)
    }
}

fn check_cohort<T: Scalar>(cohort: &[CohortSample<T>]) -> Result<()> {
    for s in cohort {
        if !s.risk.is_finite() || !s.event_time.is_finite() {
            return Err(Error::NonFinite("cohort risk or time"));
        }
        if s.event_time < T::zero() {
            return Err(Error::InvalidInput(format!("negative time for {}", s.sample_id)));
        }
    }
    Ok(())
}

/// Harrell pair counts in `O(n log n)`.
pub fn concordance_counts<T: Scalar>(cohort: &[CohortSample<T>]) -> Result<PairCounts> {
    check_cohort(cohort)?;
    let n = cohort.len();
    let mut by_risk: Vec<usize> = (0..n).collect();
    by_risk.sort_by(|&a, &b| cmp(cohort[a].risk, cohort[b].risk));
    let mut rank = vec![0usize; n];
    let mut r = 0;
    for w in 0..n {
        if w > 0 && cohort[by_risk[w]].risk != cohort[by_risk[w - 1]].risk {
            r += 1;
        }
        rank[by_risk[w]] = r;
    }
    let mut by_time: Vec<usize> = (0..n).collect();
    by_time.sort_by(|&a, &b| cmp(cohort[b].event_time, cohort[a].event_time));

    let mut tree = Fenwick::new(r + 1);
    let mut inserted = 0u64;
    let mut counts = PairCounts::default();
    let mut start = 0;
    while start < n {
        let t = cohort[by_time[start]].event_time;
        let mut end = start;
        while end < n && cohort[by_time[end]].event_time == t {
            end += 1;
        }
        // every inserted sample has a strictly later time
        for &i in &by_time[start..end] {
            if cohort[i].censored {
                continue;
            }
            let below = tree.prefix(rank[i]);
            let equal = tree.prefix(rank[i] + 1) - below;
            counts.comparable += inserted;
            counts.concordant += below;
            counts.tied_risk += equal;
        }
        for &i in &by_time[start..end] {
            tree.add(rank[i]);
            inserted += 1;
        }
        start = end;
    }
    Ok(counts)
}

/// Concordance index; higher risk should mean shorter survival.
pub fn c_index<T: Scalar>(cohort: &[CohortSample<T>]) -> Result<f64> {
    concordance_counts(cohort)?.value()
}

pub fn c_index_with_mode<T: Scalar>(cohort: &[CohortSample<T>], mode: CIndexMode) -> Result<f64> {
    match mode {
        CIndexMode::Harrell => c_index(cohort),
        CIndexMode::Literal => {
            check_cohort(cohort)?;
            let mut counts = PairCounts::default();
            for a in cohort {
                for b in cohort {
                    if a.event_time < b.event_time && !b.censored {
                        counts.comparable += 1;
                        if a.risk > b.risk {
                            counts.concordant += 1;
                        } else if a.risk == b.risk {
                            counts.tied_risk += 1;
                        }
                    }
                }
            }
            counts.value()
        }
    }
}

/// Sample median (mean of the two middle values for even counts).
pub fn median<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| cmp(*a, *b));
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / (T::one() + T::one())
    })
}

pub type Cohort<T> = Vec<CohortSample<T>>;

/// Splits a cohort into `risk > median` (high) and `risk <= median` (low),
/// preserving input order within each group.
pub fn median_risk_split<T: Scalar>(cohort: &[CohortSample<T>]) -> Result<(Cohort<T>, Cohort<T>)> {
    if cohort.len() < 2 {
        return Err(Error::Empty("cohort of at least two samples"));
    }
    check_cohort(cohort)?;
    let risks: Vec<T> = cohort.iter().map(|s| s.risk).collect();
    let m = median(&risks).expect("non-empty");
    let (high, low) = cohort.iter().cloned().partition(|s| s.risk > m);
    Ok((high, low))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmStep<T> {
    pub time: T,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: T,
}

/// Product-limit survival estimate. Survival is 1 before the first step.
#[derive(Debug, Clone, PartialEq)]
pub struct KmCurve<T> {
    pub n: usize,
    pub steps: Vec<KmStep<T>>,
}

impl<T: Scalar> KmCurve<T> {
    pub fn survival_at(&self, t: T) -> T {
        self.steps
            .iter()
            .take_while(|s| s.time <= t)
            .last()
            .map_or(T::one(), |s| s.survival)
    }

    /// Median survival time: first time with survival at or below 0.5.
    pub fn median_time(&self) -> Option<T> {
        let half = T::one() / (T::one() + T::one());
        self.steps.iter().find(|s| s.survival <= half).map(|s| s.time)
    }
}

/// `(time, censored)` pairs sorted by time, events before censorings.
fn sorted_outcomes<T: Scalar>(group: &[CohortSample<T>]) -> Vec<(T, bool)> {
    let mut v: Vec<(T, bool)> = group.iter().map(|s| (s.event_time, s.censored)).collect();
    v.sort_by(|a, b| cmp(a.0, b.0).then(a.1.cmp(&b.1)));
    v
}

pub fn km_curve<T: Scalar>(group: &[CohortSample<T>]) -> Result<KmCurve<T>> {
    if group.is_empty() {
        return Err(Error::Empty("Kaplan-Meier group"));
    }
    check_cohort(group)?;
    let outcomes = sorted_outcomes(group);
    let mut steps = Vec::new();
    let mut at_risk = outcomes.len();
    let mut survival = T::one();
    let mut i = 0;
    while i < outcomes.len() {
        let t = outcomes[i].0;
        let mut events = 0;
        let mut censored = 0;
        while i < outcomes.len() && outcomes[i].0 == t {
            if outcomes[i].1 {
                censored += 1;
            } else {
                events += 1;
            }
            i += 1;
        }
        if events > 0 {
            let d = T::from_usize(events).expect("count");
            let n = T::from_usize(at_risk).expect("count");
            survival = survival * (T::one() - d / n);
            steps.push(KmStep {
                time: t,
                at_risk,
                events,
                censored,
                survival,
            });
        }
        at_risk -= events + censored;
    }
    Ok(KmCurve { n: outcomes.len(), steps })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRank {
    pub chi_square: f64,
    pub p_value: f64,
    pub observed_a: f64,
    pub expected_a: f64,
}

/// Two-group log-rank test with a one-degree-of-freedom chi-square p-value.
pub fn logrank_test<T: Scalar>(group_a: &[CohortSample<T>], group_b: &[CohortSample<T>]) -> Result<LogRank> {
    if group_a.is_empty() || group_b.is_empty() {
        return Err(Error::Empty("log-rank group"));
    }
    check_cohort(group_a)?;
    check_cohort(group_b)?;
    let a = sorted_outcomes(group_a);
    let b = sorted_outcomes(group_b);
    let mut times: Vec<T> = a.iter().chain(&b).filter(|o| !o.1).map(|o| o.0).collect();
    if times.is_empty() {
        return Err(Error::Undefined("log-rank test (no events)"));
    }
    times.sort_by(|x, y| cmp(*x, *y));
    times.dedup();

    let tally = |v: &[(T, bool)], t: T| {
        let at_risk = v.iter().filter(|o| o.0 >= t).count() as f64;
        let events = v.iter().filter(|o| o.0 == t && !o.1).count() as f64;
        (at_risk, events)
    };
    let (mut u_a, mut u_b, mut var, mut obs_a, mut exp_a) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &t in &times {
        let (na, da) = tally(&a, t);
        let (nb, db) = tally(&b, t);
        let n = na + nb;
        let d = da + db;
        u_a += da - d * na / n;
        u_b += db - d * nb / n;
        obs_a += da;
        exp_a += d * na / n;
        if n > 1.0 {
            var += d * (na * nb) * (n - d) / (n * n * (n - 1.0));
        }
    }
    // symmetric in the two groups so swapping them is bit-identical
    let u = 0.5 * (u_a.abs() + u_b.abs());
    let chi_square = if var > 0.0 { u * u / var } else { 0.0 };
    let p_value = if chi_square > 0.0 { gamma_ur(0.5, chi_square / 2.0) } else { 1.0 };
    Ok(LogRank {
        chi_square,
        p_value,
        observed_a: obs_a,
        expected_a: exp_a,
    })
}

/// Five-number summary plus mean, the data behind a box plot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSummary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Linear-interpolation quantile of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

impl RiskSummary {
    pub fn of<T: Scalar>(values: &[T]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v: Vec<f64> = values.iter().map(|&x| widen(x)).collect();
        v.sort_by(|a, b| a.total_cmp(b));
        Some(RiskSummary {
            n: v.len(),
            min: v[0],
            q1: quantile_sorted(&v, 0.25),
            median: quantile_sorted(&v, 0.5),
            q3: quantile_sorted(&v, 0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

/// Tab-separated KM table with a leading `time 0, survival 1` row per group.
pub fn km_table<T: Scalar>(curves: &[(&str, &KmCurve<T>)]) -> String {
    let mut out = String::from("group\ttime\tat_risk\tevents\tcensored\tsurvival\n");
    for (name, curve) in curves {
        out.push_str(&format!("{name}\t0\t{}\t0\t0\t1\n", curve.n));
        for s in &curve.steps {
            out.push_str(&format!(
                "{name}\t{}\t{}\t{}\t{}\t{}\n",
                widen(s.time),
                s.at_risk,
                s.events,
                s.censored,
                widen(s.survival)
            ));
        }
    }
    out
}
