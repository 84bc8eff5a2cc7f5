use super::DomainError;

const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Weights on the (p05, p25, p50, p75, p95) percentile nodes.
pub const PERCENTILE_WEIGHTS: [f64; 5] = [0.1, 0.2, 0.4, 0.2, 0.1];

pub const INTENSITY_NAMES: [&str; 3] = ["low", "medium", "high"];

/// Discrete F10.7 distribution at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxPoints {
    pub flux: Vec<f64>,
    pub weight: Vec<f64>,
}

/// Solar-cycle intensity classes with priors, and per class and step a
/// discrete flux distribution. Intensities are mixed independently at every step.
#[derive(Debug, Clone, PartialEq)]
pub struct SolarScenario {
    priors: Vec<f64>,
    /// `points[class][h]`
    points: Vec<Vec<FluxPoints>>,
}

impl SolarScenario {
    pub fn new(priors: Vec<f64>, points: Vec<Vec<FluxPoints>>) -> Result<Self, DomainError> {
        if priors.is_empty() || priors.len() != points.len() {
            return Err(DomainError::Config(format!("{} priors for {} intensity classes", priors.len(), points.len())));
        }
        if priors.iter().any(|&p| !(p >= 0.0 && p <= 1.0)) || (priors.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(DomainError::Config(format!("intensity priors {priors:?} must be probabilities summing to 1")));
        }
        let horizon = points[0].len();
        for (i, class) in points.iter().enumerate() {
            if class.len() != horizon {
                return Err(DomainError::Config(format!("class {i} covers {} steps, expected {horizon}", class.len())));
            }
            for (h, fp) in class.iter().enumerate() {
                if fp.flux.is_empty() || fp.flux.len() != fp.weight.len() {
                    return Err(DomainError::Config(format!("class {i} step {h}: flux and weight lists differ in length")));
                }
                if fp.flux.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
                    return Err(DomainError::Config(format!("class {i} step {h}: flux values must be positive")));
                }
                if fp.weight.iter().any(|&w| !(w >= 0.0)) || (fp.weight.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(DomainError::Config(format!("class {i} step {h}: weights must be non-negative and sum to 1")));
                }
            }
        }
        Ok(SolarScenario { priors, points })
    }

    /// Builds each class from percentile rows `rows[class][h] = [p05, p25, p50, p75, p95]`.
    pub fn from_percentiles(priors: Vec<f64>, rows: &[Vec<[f64; 5]>], weights: [f64; 5]) -> Result<Self, DomainError> {
        let mut points = Vec::with_capacity(rows.len());
        for (i, class) in rows.iter().enumerate() {
            let mut steps = Vec::with_capacity(class.len());
            for (h, p) in class.iter().enumerate() {
                if p.windows(2).any(|w| w[1] < w[0]) {
                    return Err(DomainError::Config(format!("class {i} step {h}: percentiles {p:?} decrease")));
                }
                let (flux, weight) = p.iter().zip(weights).filter(|(_, w)| *w > 0.0).map(|(&f, w)| (f, w)).unzip();
                steps.push(FluxPoints { flux, weight });
            }
            points.push(steps);
        }
        Self::new(priors, points)
    }

    /// One class with a single flux value per step.
    pub fn deterministic(flux: Vec<f64>) -> Result<Self, DomainError> {
        let steps = flux.into_iter().map(|f| FluxPoints { flux: vec![f], weight: vec![1.0] }).collect();
        Self::new(vec![1.0], vec![steps])
    }

    pub fn horizon(&self) -> usize {
        self.points[0].len()
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn points(&self, class: usize, h: usize) -> &FluxPoints {
        &self.points[class][h]
    }

    /// Flattened mixture at step `h`: `(flux, Pr_i * Pr(f | i))` over classes
    /// then points, zero-weight entries dropped.
    pub fn branches(&self, h: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for (prior, class) in self.priors.iter().zip(&self.points) {
            let fp = &class[h];
            for (&f, &w) in fp.flux.iter().zip(&fp.weight) {
                let p = prior * w;
                if p > 0.0 {
                    out.push((f, p));
                }
            }
        }
        out
    }

    pub fn expected_flux(&self, h: usize) -> f64 {
        self.branches(h).iter().map(|(f, p)| f * p).sum()
    }

    /// Single-point scenario at the expected flux of each step.
    pub fn collapsed(&self) -> SolarScenario {
        Self::deterministic((0..self.horizon()).map(|h| self.expected_flux(h)).collect()).expect("expected flux of a valid scenario is valid")
    }
}

/// Distribution of the achieved-to-commanded raise ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct ThrustModel {
    eta: Vec<f64>,
    weight: Vec<f64>,
}

impl ThrustModel {
    pub fn new(eta: Vec<f64>, weight: Vec<f64>) -> Result<Self, DomainError> {
        if eta.is_empty() || eta.len() != weight.len() {
            return Err(DomainError::Config("thrust factors and weights must be non-empty and of equal length".into()));
        }
        if eta.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(DomainError::Config(format!("thrust factors {eta:?} must be positive")));
        }
        if weight.iter().any(|&w| !(w >= 0.0)) || (weight.iter().sum::<f64>() - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(DomainError::Config(format!("thrust weights {weight:?} must sum to 1")));
        }
        let mean: f64 = eta.iter().zip(&weight).map(|(e, w)| e * w).sum();
        if !(0.8..=1.2).contains(&mean) {
            return Err(DomainError::Config(format!("mean thrust factor {mean} outside [0.8, 1.2]")));
        }
        Ok(ThrustModel { eta, weight })
    }

    pub fn exact() -> Self {
        ThrustModel { eta: vec![1.0], weight: vec![1.0] }
    }

    /// `eta in {0.9, 1.0, 1.1}` with weights `{0.2, 0.6, 0.2}`.
    pub fn three_point() -> Self {
        ThrustModel { eta: vec![0.9, 1.0, 1.1], weight: vec![0.2, 0.6, 0.2] }
    }

    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.eta.iter().copied().zip(self.weight.iter().copied()).filter(|&(_, w)| w > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(base: f64, n: usize) -> Vec<[f64; 5]> {
        (0..n).map(|h| {
            let m = base + h as f64;
            [m - 20.0, m - 8.0, m, m + 8.0, m + 20.0]
        }).collect()
    }

    #[test]
    fn branches_mix_priors_and_percentiles() {
        let s = SolarScenario::from_percentiles(vec![0.2, 0.5, 0.3], &[rows(90.0, 4), rows(130.0, 4), rows(180.0, 4)], PERCENTILE_WEIGHTS).unwrap();
        let b = s.branches(2);
        assert_eq!(b.len(), 15);
        assert!((b.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(b[0], (72.0, 0.2 * 0.1));
        assert_eq!(b[7], (132.0, 0.5 * 0.4));
        let expected = 0.2 * 92.0 + 0.5 * 132.0 + 0.3 * 182.0;
        assert!((s.expected_flux(2) - expected).abs() < 1e-12);
        let c = s.collapsed();
        assert_eq!(c.branches(2), vec![(s.expected_flux(2), 1.0)]);
    }

    #[test]
    fn zero_weights_drop_points() {
        let s = SolarScenario::from_percentiles(vec![1.0], &[rows(100.0, 2)], [0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.branches(1), vec![(101.0, 1.0)]);
    }

    #[test]
    fn validation() {
        assert!(SolarScenario::from_percentiles(vec![0.5, 0.6], &[rows(90.0, 2), rows(90.0, 2)], PERCENTILE_WEIGHTS).is_err());
        let mut bad = rows(90.0, 2);
        bad[1][3] = 10.0;
        assert!(SolarScenario::from_percentiles(vec![1.0], &[bad], PERCENTILE_WEIGHTS).is_err());
        assert!(SolarScenario::from_percentiles(vec![1.0], &[rows(90.0, 2)], [0.1, 0.2, 0.4, 0.2, 0.2]).is_err());
        assert!(SolarScenario::from_percentiles(vec![0.5, 0.5], &[rows(90.0, 2), rows(90.0, 3)], PERCENTILE_WEIGHTS).is_err());
        assert!(ThrustModel::new(vec![0.9, 1.0, 1.1], vec![0.2, 0.6, 0.2]).is_ok());
        assert!(ThrustModel::new(vec![1.5, 1.6], vec![0.5, 0.5]).is_err());
        assert!(ThrustModel::new(vec![1.0], vec![0.9]).is_err());
        assert!(ThrustModel::new(vec![-1.0, 3.0], vec![0.5, 0.5]).is_err());
    }
}
