//! Data model for multi-experiment logs: experiment sets, treatment
//! coalitions, observation tables and per-coalition estimate containers.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest experiment count for which exact power-set enumeration (and exact
/// Shapley computation) is allowed by default.
pub const DEFAULT_MAX_EXACT_EXPERIMENTS: usize = 15;

/// Hard cap implied by the `u32` coalition mask.
const MASK_BITS: usize = 32;

/// The set of parallel experiments under analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentSet {
    count: usize,
    labels: Vec<String>,
}

impl ExperimentSet {
    /// A set of `count` experiments labelled `exp_0..exp_{count-1}`.
    pub fn new(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidConfig(
                "experiment count must be at least 1".into(),
            ));
        }
        if count > MASK_BITS {
            return Err(Error::TooManyExperiments {
                count,
                limit: MASK_BITS,
            });
        }
        let labels = (0..count).map(|l| format!("exp_{l}")).collect();
        Ok(Self { count, labels })
    }

    /// Replaces the default display labels.
    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.count {
            return Err(Error::InvalidConfig(format!(
                "expected {} labels, got {}",
                self.count,
                labels.len()
            )));
        }
        self.labels = labels;
        Ok(self)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn label(&self, l: usize) -> &str {
        &self.labels[l]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Number of distinct treatment combinations, `2^count`.
    pub fn coalition_count(&self) -> usize {
        1usize << self.count
    }

    /// The grand coalition with every experiment active.
    pub fn grand_coalition(&self) -> Coalition {
        Coalition(((1u64 << self.count) - 1) as u32)
    }
}

/// A subset of simultaneously active experiments, encoded as a bitmask with
/// bit `l` set when experiment `l` is active. Mask 0 is the empty coalition,
/// i.e. the control/baseline group.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct Coalition(pub u32);

impl Coalition {
    pub const EMPTY: Coalition = Coalition(0);

    pub fn singleton(l: usize) -> Coalition {
        Coalition(1 << l)
    }

    pub fn mask(self) -> u32 {
        self.0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Number of active experiments.
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, l: usize) -> bool {
        self.0 >> l & 1 == 1
    }

    pub fn with(self, l: usize) -> Coalition {
        Coalition(self.0 | 1 << l)
    }

    pub fn without(self, l: usize) -> Coalition {
        Coalition(self.0 & !(1u32 << l))
    }

    pub fn is_subset_of(self, other: Coalition) -> bool {
        self.0 & !other.0 == 0
    }

    /// Active experiment indices in ascending order.
    pub fn members(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..MASK_BITS).filter(move |l| mask >> l & 1 == 1)
    }

    /// All subsets of this coalition, the empty set and the coalition itself
    /// included. Iteration order is descending in mask value.
    pub fn subsets(self) -> SubsetIter {
        SubsetIter {
            mask: self.0,
            current: self.0,
            done: false,
        }
    }

    /// Treatment bitstring `t_0 t_1 .. t_{len-1}` with experiment 0 as the
    /// leftmost character, matching the `t_l` column order.
    pub fn bitstring(self, len: usize) -> String {
        (0..len)
            .map(|l| if self.contains(l) { '1' } else { '0' })
            .collect()
    }

    /// Rank of this coalition's bitstring in lexicographic order over all
    /// length-`len` bitstrings: experiment 0 acts as the most significant
    /// bit. Used to index effects laid out in dummy-column order.
    pub fn lexicographic_rank(self, len: usize) -> usize {
        self.members().map(|l| 1usize << (len - 1 - l)).sum()
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_empty() {
            return write!(f, "{{}}");
        }
        let members: Vec<String> = self.members().map(|l| l.to_string()).collect();
        write!(f, "{{{}}}", members.join(","))
    }
}

/// Iterator over the submasks of a coalition.
pub struct SubsetIter {
    mask: u32,
    current: u32,
    done: bool,
}

impl Iterator for SubsetIter {
    type Item = Coalition;

    fn next(&mut self) -> Option<Coalition> {
        if self.done {
            return None;
        }
        let out = Coalition(self.current);
        if self.current == 0 {
            self.done = true;
        } else {
            self.current = (self.current - 1) & self.mask;
        }
        Some(out)
    }
}

/// All `2^L` coalitions in ascending mask order, starting with the empty
/// coalition.
pub fn power_set(experiments: &ExperimentSet, max_exact: usize) -> Result<Vec<Coalition>> {
    if experiments.count() > max_exact {
        return Err(Error::TooManyExperiments {
            count: experiments.count(),
            limit: max_exact,
        });
    }
    Ok((0..experiments.coalition_count() as u32)
        .map(Coalition)
        .collect())
}

/// An immutable log of observation units: outcome, frequency weight,
/// assigned treatment coalition and covariates per row.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationTable {
    experiments: ExperimentSet,
    covariate_dim: usize,
    outcomes: Vec<f64>,
    weights: Vec<f64>,
    treatments: Vec<Coalition>,
    covariates: Vec<f64>, // row-major, n * covariate_dim
}

impl ObservationTable {
    pub fn new(
        experiments: ExperimentSet,
        covariate_dim: usize,
        outcomes: Vec<f64>,
        weights: Option<Vec<f64>>,
        treatments: Vec<Coalition>,
        covariates: Vec<f64>,
    ) -> Result<Self> {
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::EmptyTable);
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; n]);
        if treatments.len() != n || weights.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "outcomes ({}), weights ({}) and treatments ({}) must have equal length",
                n,
                weights.len(),
                treatments.len()
            )));
        }
        if covariates.len() != n * covariate_dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} covariate values, got {}",
                n * covariate_dim,
                covariates.len()
            )));
        }
        let coalition_limit = 1u64 << experiments.count();
        for (i, (&y, &w)) in outcomes.iter().zip(&weights).enumerate() {
            if !y.is_finite() {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("outcome {y} is not finite"),
                });
            }
            if !w.is_finite() || w <= 0.0 {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!("weight {w} must be strictly positive and finite"),
                });
            }
            if u64::from(treatments[i].mask()) >= coalition_limit {
                return Err(Error::MalformedRow {
                    row: i,
                    reason: format!(
                        "treatment mask {} out of range for {} experiments",
                        treatments[i].mask(),
                        experiments.count()
                    ),
                });
            }
        }
        for (i, x) in covariates.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::MalformedRow {
                    row: i / covariate_dim.max(1),
                    reason: format!("covariate {x} is not finite"),
                });
            }
        }
        Ok(Self {
            experiments,
            covariate_dim,
            outcomes,
            weights,
            treatments,
            covariates,
        })
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn experiments(&self) -> &ExperimentSet {
        &self.experiments
    }

    pub fn experiment_count(&self) -> usize {
        self.experiments.count()
    }

    pub fn covariate_dim(&self) -> usize {
        self.covariate_dim
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.outcomes[i]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn treatment(&self, i: usize) -> Coalition {
        self.treatments[i]
    }

    pub fn covariate_row(&self, i: usize) -> &[f64] {
        &self.covariates[i * self.covariate_dim..(i + 1) * self.covariate_dim]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn treatments(&self) -> &[Coalition] {
        &self.treatments
    }

    /// Sum of row weights.
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Raw row count per observed coalition.
    pub fn coalition_counts(&self) -> BTreeMap<Coalition, usize> {
        let mut counts = BTreeMap::new();
        for &t in &self.treatments {
            *counts.entry(t).or_insert(0) += 1;
        }
        counts
    }

    /// Weight share per observed coalition; shares sum to 1.
    pub fn coalition_frequencies(&self) -> BTreeMap<Coalition, f64> {
        let total = self.total_weight();
        let mut sums: BTreeMap<Coalition, f64> = BTreeMap::new();
        for (&t, &w) in self.treatments.iter().zip(&self.weights) {
            *sums.entry(t).or_insert(0.0) += w;
        }
        for v in sums.values_mut() {
            *v /= total;
        }
        sums
    }

    /// New table holding the given rows (repetition allowed); used by the
    /// bootstrap.
    pub fn select(&self, indices: &[usize]) -> ObservationTable {
        let d = self.covariate_dim;
        let mut outcomes = Vec::with_capacity(indices.len());
        let mut weights = Vec::with_capacity(indices.len());
        let mut treatments = Vec::with_capacity(indices.len());
        let mut covariates = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            outcomes.push(self.outcomes[i]);
            weights.push(self.weights[i]);
            treatments.push(self.treatments[i]);
            covariates.extend_from_slice(self.covariate_row(i));
        }
        ObservationTable {
            experiments: self.experiments.clone(),
            covariate_dim: d,
            outcomes,
            weights,
            treatments,
            covariates,
        }
    }

    /// Projects the log onto a single experiment: the treatment of each row
    /// becomes `{0}` when experiment `l` was active and the empty coalition
    /// otherwise. Outcomes, weights and covariates are unchanged.
    pub fn marginal_collapse(&self, l: usize) -> Result<ObservationTable> {
        if l >= self.experiments.count() {
            return Err(Error::IndexOutOfRange {
                index: l,
                count: self.experiments.count(),
            });
        }
        let experiments =
            ExperimentSet::new(1)?.with_labels(vec![self.experiments.label(l).to_string()])?;
        let treatments = self
            .treatments
            .iter()
            .map(|t| {
                if t.contains(l) {
                    Coalition::singleton(0)
                } else {
                    Coalition::EMPTY
                }
            })
            .collect();
        Ok(ObservationTable {
            experiments,
            covariate_dim: self.covariate_dim,
            outcomes: self.outcomes.clone(),
            weights: self.weights.clone(),
            treatments,
            covariates: self.covariates.clone(),
        })
    }
}

/// Indicator vector: entry `i` is true iff row `i` received exactly the
/// coalition `t` (multivariate semantics, not containment).
pub fn indicator(table: &ObservationTable, t: Coalition) -> Vec<bool> {
    table.treatments().iter().map(|&ti| ti == t).collect()
}

/// Parsed CSV header layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvSchema {
    pub experiments: usize,
    pub covariate_dim: usize,
    pub has_weight: bool,
}

/// Validates a header line against the `y[,w],t_0..,x_0..` schema and
/// returns the inferred layout.
pub fn parse_header(fields: &[String]) -> Result<CsvSchema> {
    let mut iter = fields.iter().peekable();
    match iter.next() {
        Some(f) if f == "y" => {}
        other => {
            return Err(Error::InvalidHeader(format!(
                "first column must be 'y', got {other:?}"
            )))
        }
    }
    let has_weight = matches!(iter.peek(), Some(f) if *f == "w");
    if has_weight {
        iter.next();
    }
    let mut experiments = 0;
    while matches!(iter.peek(), Some(f) if **f == format!("t_{experiments}")) {
        iter.next();
        experiments += 1;
    }
    if experiments == 0 {
        return Err(Error::InvalidHeader(
            "expected at least one treatment column t_0".into(),
        ));
    }
    let mut covariate_dim = 0;
    while matches!(iter.peek(), Some(f) if **f == format!("x_{covariate_dim}")) {
        iter.next();
        covariate_dim += 1;
    }
    if let Some(extra) = iter.next() {
        return Err(Error::InvalidHeader(format!(
            "unexpected column {extra:?}"
        )));
    }
    Ok(CsvSchema {
        experiments,
        covariate_dim,
        has_weight,
    })
}

/// Parses a CSV stream with header `y[,w],t_0..t_{L-1},x_0..x_{d-1}` into a
/// validated table. Row order is preserved; a missing `w` column defaults
/// every weight to 1.
pub fn parse_table<R: Read>(
    source: R,
    experiments: usize,
    covariate_dim: usize,
) -> Result<ObservationTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| Error::InvalidHeader(e.to_string()))?
        .iter()
        .map(|f| f.trim().to_string())
        .collect();
    let schema = parse_header(&header)?;
    if schema.experiments != experiments || schema.covariate_dim != covariate_dim {
        return Err(Error::InvalidHeader(format!(
            "header describes {} experiments and {} covariates, expected {} and {}",
            schema.experiments, schema.covariate_dim, experiments, covariate_dim
        )));
    }
    let expected_len = 1 + usize::from(schema.has_weight) + experiments + covariate_dim;

    let mut outcomes = Vec::new();
    let mut weights = Vec::new();
    let mut treatments = Vec::new();
    let mut covariates = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::MalformedRow {
            row,
            reason: e.to_string(),
        })?;
        if record.len() != expected_len {
            return Err(Error::MalformedRow {
                row,
                reason: format!("expected {expected_len} columns, got {}", record.len()),
            });
        }
        let parse = |field: &str, column: &str| -> Result<f64> {
            field.trim().parse::<f64>().map_err(|_| Error::MalformedRow {
                row,
                reason: format!("column {column}: {field:?} is not numeric"),
            })
        };
        let mut idx = 0;
        outcomes.push(parse(&record[idx], "y")?);
        idx += 1;
        if schema.has_weight {
            weights.push(parse(&record[idx], "w")?);
            idx += 1;
        }
        let mut mask = Coalition::EMPTY;
        for l in 0..experiments {
            let column = format!("t_{l}");
            let value = parse(&record[idx], &column)?;
            if value == 1.0 {
                mask = mask.with(l);
            } else if value != 0.0 {
                return Err(Error::InvalidTreatmentBit {
                    row,
                    column,
                    value: record[idx].trim().to_string(),
                });
            }
            idx += 1;
        }
        treatments.push(mask);
        for j in 0..covariate_dim {
            covariates.push(parse(&record[idx], &format!("x_{j}"))?);
            idx += 1;
        }
    }
    if outcomes.is_empty() {
        return Err(Error::EmptyTable);
    }
    let weights = if schema.has_weight { Some(weights) } else { None };
    ObservationTable::new(
        ExperimentSet::new(experiments)?,
        covariate_dim,
        outcomes,
        weights,
        treatments,
        covariates,
    )
}

/// Writes the table in the canonical CSV schema. Floats use the shortest
/// representation that round-trips, so `parse_table` recovers the table
/// bit-exactly.
pub fn write_csv<W: Write>(table: &ObservationTable, mut writer: W) -> std::io::Result<()> {
    let l = table.experiment_count();
    let d = table.covariate_dim();
    let mut header = String::from("y,w");
    for i in 0..l {
        header.push_str(&format!(",t_{i}"));
    }
    for j in 0..d {
        header.push_str(&format!(",x_{j}"));
    }
    writeln!(writer, "{header}")?;
    for i in 0..table.len() {
        let mut line = format!("{},{}", table.outcome(i), table.weight(i));
        let t = table.treatment(i);
        for bit in 0..l {
            line.push(',');
            line.push(if t.contains(bit) { '1' } else { '0' });
        }
        for x in table.covariate_row(i) {
            line.push_str(&format!(",{x}"));
        }
        writeln!(writer, "{line}")?;
    }
    Ok(())
}

/// Per-coalition mean-outcome estimates, exposure weights and counts; the
/// induced cost-sharing game is `v(S) = mu_S - mu_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoalitionEstimates {
    pub experiments: ExperimentSet,
    /// Estimated baseline outcome `mu_0` (empty coalition).
    pub baseline: f64,
    /// Estimated mean outcome per non-empty coalition.
    pub values: BTreeMap<Coalition, f64>,
    /// Estimated exposure probability per coalition; sums to 1.
    pub weights: BTreeMap<Coalition, f64>,
    /// Raw observation count per observed coalition.
    pub counts: BTreeMap<Coalition, usize>,
}

impl CoalitionEstimates {
    pub fn new(
        experiments: ExperimentSet,
        baseline: f64,
        values: BTreeMap<Coalition, f64>,
        weights: BTreeMap<Coalition, f64>,
        counts: BTreeMap<Coalition, usize>,
    ) -> Result<Self> {
        let total: f64 = weights.values().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "coalition weights sum to {total}, expected 1"
            )));
        }
        if values.contains_key(&Coalition::EMPTY) {
            return Err(Error::InvalidConfig(
                "the empty coalition belongs in `baseline`, not `values`".into(),
            ));
        }
        Ok(Self {
            experiments,
            baseline,
            values,
            weights,
            counts,
        })
    }

    /// Game value `v(S) = mu_S - mu_0`; exactly zero for the empty
    /// coalition, `None` when `mu_S` was never estimated.
    pub fn game_value(&self, s: Coalition) -> Option<f64> {
        if s.is_empty() {
            return Some(0.0);
        }
        self.values.get(&s).map(|mu| mu - self.baseline)
    }

    pub fn weight(&self, s: Coalition) -> f64 {
        self.weights.get(&s).copied().unwrap_or(0.0)
    }

    /// The exposure-weighted total effect over the baseline,
    /// `sum_T P(T) v(T)`; this is the quantity both sharing rules decompose.
    pub fn total_effect(&self) -> Result<f64> {
        let mut total = 0.0;
        for (&t, &p) in &self.weights {
            if t.is_empty() || p == 0.0 {
                continue;
            }
            let v = self
                .game_value(t)
                .ok_or_else(|| Error::UnobservedCoalition(t.to_string()))?;
            total += p * v;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table_from(csv: &str, l: usize, d: usize) -> Result<ObservationTable> {
        parse_table(csv.as_bytes(), l, d)
    }

    #[test]
    fn parses_a_two_row_file() {
        let t = table_from("y,w,t_0,x_0\n1,1,1,0.5\n0,1,0,-0.2", 1, 1).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.experiment_count(), 1);
        assert_eq!(t.covariate_dim(), 1);
        assert_eq!(t.treatment(0), Coalition::singleton(0));
        assert_eq!(t.treatment(1), Coalition::EMPTY);
        assert_eq!(t.outcome(0), 1.0);
        assert_eq!(t.covariate_row(1), &[-0.2]);
    }

    #[test]
    fn header_only_file_is_empty() {
        match table_from("y,w,t_0,x_0\n", 1, 1) {
            Err(Error::EmptyTable) => {}
            other => panic!("expected EmptyTable, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_binary_treatment() {
        match table_from("y,w,t_0\n1,1,2\n", 1, 0) {
            Err(Error::InvalidTreatmentBit { row: 0, .. }) => {}
            other => panic!("expected InvalidTreatmentBit, got {other:?}"),
        }
    }

    #[test]
    fn rejects_non_numeric_cell_and_wrong_column_count() {
        assert!(matches!(
            table_from("y,w,t_0\nfoo,1,0\n", 1, 0),
            Err(Error::MalformedRow { row: 0, .. })
        ));
        assert!(matches!(
            table_from("y,w,t_0\n1,1\n", 1, 0),
            Err(Error::MalformedRow { row: 0, .. })
        ));
    }

    #[test]
    fn missing_weight_column_defaults_to_one() {
        let t = table_from("y,t_0\n3,1\n4,0\n", 1, 0).unwrap();
        assert_eq!(t.weights(), &[1.0, 1.0]);
    }

    #[test]
    fn rejects_header_mismatch() {
        assert!(matches!(
            table_from("y,w,t_0,t_1\n1,1,0,0\n", 1, 0),
            Err(Error::InvalidHeader(_))
        ));
        assert!(matches!(
            table_from("z,t_0\n1,0\n", 1, 0),
            Err(Error::InvalidHeader(_))
        ));
    }

    #[test]
    fn power_set_is_ordered_and_complete() {
        let one = ExperimentSet::new(1).unwrap();
        assert_eq!(
            power_set(&one, DEFAULT_MAX_EXACT_EXPERIMENTS).unwrap(),
            vec![Coalition::EMPTY, Coalition(1)]
        );
        let two = ExperimentSet::new(2).unwrap();
        assert_eq!(
            power_set(&two, DEFAULT_MAX_EXACT_EXPERIMENTS).unwrap(),
            vec![Coalition(0), Coalition(1), Coalition(2), Coalition(3)]
        );
        let three = ExperimentSet::new(3).unwrap();
        let sets = power_set(&three, DEFAULT_MAX_EXACT_EXPERIMENTS).unwrap();
        assert_eq!(sets.len(), 8);
        assert_eq!(sets[0], Coalition::EMPTY);
        let mut dedup = sets.clone();
        dedup.dedup();
        assert_eq!(dedup.len(), 8);
    }

    #[test]
    fn power_set_respects_the_exact_limit() {
        let set = ExperimentSet::new(16).unwrap();
        assert!(matches!(
            power_set(&set, DEFAULT_MAX_EXACT_EXPERIMENTS),
            Err(Error::TooManyExperiments { count: 16, limit: 15 })
        ));
    }

    #[test]
    fn indicator_matches_exact_coalitions() {
        let t = table_from("y,t_0,t_1\n1,0,0\n2,1,0\n3,1,1\n", 2, 0).unwrap();
        let d = |c: Coalition| indicator(&t, c);
        assert_eq!(d(Coalition::singleton(0)), vec![false, true, false]);
        assert_eq!(d(Coalition::EMPTY), vec![true, false, false]);
        assert_eq!(d(Coalition::singleton(1)), vec![false, false, false]);
    }

    #[test]
    fn every_row_matches_exactly_one_coalition() {
        let t = table_from("y,t_0,t_1\n1,0,0\n2,1,0\n3,1,1\n4,0,1\n", 2, 0).unwrap();
        for i in 0..t.len() {
            let hits: usize = power_set(t.experiments(), 15)
                .unwrap()
                .iter()
                .map(|&c| usize::from(indicator(&t, c)[i]))
                .sum();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn marginal_collapse_projects_bits() {
        let t = table_from("y,t_0,t_1\n1,1,1\n2,0,1\n3,0,0\n", 2, 0).unwrap();
        let c0 = t.marginal_collapse(0).unwrap();
        assert_eq!(
            c0.treatments(),
            &[Coalition(1), Coalition(0), Coalition(0)]
        );
        let c1 = t.marginal_collapse(1).unwrap();
        assert_eq!(
            c1.treatments(),
            &[Coalition(1), Coalition(1), Coalition(0)]
        );
        assert_eq!(c1.outcomes(), t.outcomes());
    }

    #[test]
    fn collapsing_a_single_experiment_table_is_identity() {
        let t = table_from("y,w,t_0,x_0\n1,2,1,0.5\n0,1,0,-0.2", 1, 1).unwrap();
        let c = t.marginal_collapse(0).unwrap();
        assert_eq!(c, t);
        assert!(matches!(
            t.marginal_collapse(1),
            Err(Error::IndexOutOfRange { index: 1, count: 1 })
        ));
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let t = table_from(
            "y,w,t_0,t_1,x_0\n0.1,1.5,1,0,0.3333333333333333\n-2,1,0,1,1e-11\n",
            2,
            1,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_csv(&t, &mut buf).unwrap();
        let back = parse_table(buf.as_slice(), 2, 1).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn coalition_bit_helpers() {
        let c = Coalition(0b101);
        assert_eq!(c.size(), 2);
        assert!(c.contains(0) && c.contains(2) && !c.contains(1));
        assert_eq!(c.members().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(c.bitstring(3), "101");
        assert_eq!(c.lexicographic_rank(3), 0b101);
        // lexicographic rank flips bit significance: {0} ranks above {2}.
        assert_eq!(Coalition::singleton(0).lexicographic_rank(3), 4);
        assert_eq!(Coalition::singleton(2).lexicographic_rank(3), 1);
        assert_eq!(c.to_string(), "{0,2}");
        assert_eq!(Coalition::EMPTY.to_string(), "{}");
        let subsets: Vec<u32> = c.subsets().map(Coalition::mask).collect();
        assert_eq!(subsets, vec![0b101, 0b100, 0b001, 0b000]);
    }

    #[test]
    fn select_repeats_rows() {
        let t = table_from("y,w,t_0,x_0\n1,1,1,0.5\n0,2,0,-0.2", 1, 1).unwrap();
        let s = t.select(&[1, 1, 0]);
        assert_eq!(s.outcomes(), &[0.0, 0.0, 1.0]);
        assert_eq!(s.weight(0), 2.0);
        assert_eq!(s.covariate_row(2), &[0.5]);
    }

    #[test]
    fn estimates_validate_weight_total() {
        let exp = ExperimentSet::new(1).unwrap();
        let mut weights = BTreeMap::new();
        weights.insert(Coalition::EMPTY, 0.6);
        weights.insert(Coalition(1), 0.4);
        let mut values = BTreeMap::new();
        values.insert(Coalition(1), 2.0);
        let est = CoalitionEstimates::new(
            exp.clone(),
            1.0,
            values.clone(),
            weights.clone(),
            BTreeMap::new(),
        )
        .unwrap();
        assert_eq!(est.game_value(Coalition::EMPTY), Some(0.0));
        assert_eq!(est.game_value(Coalition(1)), Some(1.0));
        assert!((est.total_effect().unwrap() - 0.4).abs() < 1e-15);

        weights.insert(Coalition(1), 0.5);
        assert!(CoalitionEstimates::new(exp, 1.0, values, weights, BTreeMap::new()).is_err());
    }
}
