//! Declarative description of `N` coupled collective spins of length `S`
//! with coherent couplings and Lindblad dissipators.
//!
//! The master equation is
//!
//! ```text
//! dρ/dt = -i[H, ρ] + Σ_n Γ_n (2 c_n ρ c_n† - c_n† c_n ρ - ρ c_n† c_n)
//! ```
//!
//! Every term is written in terms of the site operators `S^z_i`, `S^±_i`.
//! Couplings of decay, gain, one-axis twisting and Heisenberg bonds are
//! divided by `2S` when `rescale_by_2s` is set (each term can override this);
//! drive, longitudinal field and dephasing are used as given unless a term
//! asks for rescaling explicitly.

use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::{Deserialize, Serialize, Serializer};

use crate::error::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    Open,
    Periodic,
}

/// A single site index, or every site of the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteSpec {
    All,
    Site(usize),
}

impl Default for SiteSpec {
    fn default() -> Self {
        SiteSpec::All
    }
}

impl Serialize for SiteSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SiteSpec::All => serializer.serialize_str("all"),
            SiteSpec::Site(i) => serializer.serialize_u64(*i as u64),
        }
    }
}

impl<'de> Deserialize<'de> for SiteSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct SiteVisitor;

        impl Visitor<'_> for SiteVisitor {
            type Value = SiteSpec;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a non-negative site index or \"all\"")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<SiteSpec, E> {
                Ok(SiteSpec::Site(v as usize))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<SiteSpec, E> {
                usize::try_from(v)
                    .map(SiteSpec::Site)
                    .map_err(|_| E::custom(format!("negative site index {v}")))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<SiteSpec, E> {
                if v == "all" {
                    Ok(SiteSpec::All)
                } else {
                    Err(E::invalid_value(de::Unexpected::Str(v), &self))
                }
            }
        }

        deserializer.deserialize_any(SiteVisitor)
    }
}

/// Coherent part of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianTerm {
    /// `Ω S^x_i`
    TransverseDrive {
        omega: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
    /// `Δ S^z_i`
    LongitudinalField {
        delta: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
    /// `g (S^x_i)^2`
    OneAxisTwist {
        g: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
    /// `Jx S^x_i S^x_j + Jy S^y_i S^y_j + Jz S^z_i S^z_j`
    HeisenbergBond {
        jx: f64,
        jy: f64,
        jz: f64,
        site_i: usize,
        site_j: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
}

/// Incoherent part of the dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DissipatorTerm {
    /// `Γ D[S^-_i]`
    Decay {
        gamma: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
    /// `Γ D[S^+_i]`
    Gain {
        gamma: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
    /// `Γφ D[S^z_i]`
    Dephasing {
        gamma: f64,
        #[serde(default)]
        site: SiteSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rescale: Option<bool>,
    },
}

/// Shared behaviour of Hamiltonian and dissipator terms needed for rescaling.
pub trait ModelTerm {
    /// Whether the coupling is divided by `2S` when the model-wide flag is on.
    fn follows_model_rescale(&self) -> bool;
    fn rescale_override(&self) -> Option<bool>;
    fn name(&self) -> &'static str;
}

impl ModelTerm for HamiltonianTerm {
    fn follows_model_rescale(&self) -> bool {
        matches!(
            self,
            HamiltonianTerm::OneAxisTwist { .. } | HamiltonianTerm::HeisenbergBond { .. }
        )
    }

    fn rescale_override(&self) -> Option<bool> {
        match self {
            HamiltonianTerm::TransverseDrive { rescale, .. }
            | HamiltonianTerm::LongitudinalField { rescale, .. }
            | HamiltonianTerm::OneAxisTwist { rescale, .. }
            | HamiltonianTerm::HeisenbergBond { rescale, .. } => *rescale,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            HamiltonianTerm::TransverseDrive { .. } => "transverse_drive",
            HamiltonianTerm::LongitudinalField { .. } => "longitudinal_field",
            HamiltonianTerm::OneAxisTwist { .. } => "one_axis_twist",
            HamiltonianTerm::HeisenbergBond { .. } => "heisenberg_bond",
        }
    }
}

impl ModelTerm for DissipatorTerm {
    fn follows_model_rescale(&self) -> bool {
        !matches!(self, DissipatorTerm::Dephasing { .. })
    }

    fn rescale_override(&self) -> Option<bool> {
        match self {
            DissipatorTerm::Decay { rescale, .. }
            | DissipatorTerm::Gain { rescale, .. }
            | DissipatorTerm::Dephasing { rescale, .. } => *rescale,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            DissipatorTerm::Decay { .. } => "decay",
            DissipatorTerm::Gain { .. } => "gain",
            DissipatorTerm::Dephasing { .. } => "dephasing",
        }
    }
}

/// A model term with concrete site indices and effective (possibly rescaled)
/// couplings. This is what the stochastic engine and the exact solver consume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ResolvedTerm {
    Drive { omega: f64, site: usize },
    Field { delta: f64, site: usize },
    Twist { g: f64, site: usize },
    Bond { jx: f64, jy: f64, jz: f64, i: usize, j: usize },
    Decay { gamma: f64, site: usize },
    Gain { gamma: f64, site: usize },
    Dephasing { gamma: f64, site: usize },
}

impl ResolvedTerm {
    pub fn is_interaction(&self) -> bool {
        matches!(self, ResolvedTerm::Twist { .. } | ResolvedTerm::Bond { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinModel {
    pub n_sites: usize,
    pub spin_s: f64,
    #[serde(default)]
    pub hamiltonian: Vec<HamiltonianTerm>,
    #[serde(default)]
    pub dissipators: Vec<DissipatorTerm>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    #[serde(default = "default_rescale")]
    pub rescale_by_2s: bool,
}

fn default_boundary() -> Boundary {
    Boundary::Open
}

fn default_rescale() -> bool {
    true
}

impl SpinModel {
    /// An empty model: no couplings, no dissipation.
    pub fn new(n_sites: usize, spin_s: f64) -> Self {
        SpinModel {
            n_sites,
            spin_s,
            hamiltonian: Vec::new(),
            dissipators: Vec::new(),
            boundary: Boundary::Open,
            rescale_by_2s: true,
        }
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_rescale(mut self, rescale_by_2s: bool) -> Self {
        self.rescale_by_2s = rescale_by_2s;
        self
    }

    pub fn with_term(mut self, term: HamiltonianTerm) -> Self {
        self.hamiltonian.push(term);
        self
    }

    pub fn with_dissipator(mut self, term: DissipatorTerm) -> Self {
        self.dissipators.push(term);
        self
    }

    /// Adds nearest-neighbour Heisenberg bonds `(i, i+1)` along the chain, plus
    /// the closing bond `(N-1, 0)` when the boundary is periodic and `N > 2`.
    pub fn with_heisenberg_chain(mut self, jx: f64, jy: f64, jz: f64) -> Self {
        let n = self.n_sites;
        for i in 0..n.saturating_sub(1) {
            self.hamiltonian.push(HamiltonianTerm::HeisenbergBond {
                jx,
                jy,
                jz,
                site_i: i,
                site_j: i + 1,
                rescale: None,
            });
        }
        if self.boundary == Boundary::Periodic && n > 2 {
            self.hamiltonian.push(HamiltonianTerm::HeisenbergBond {
                jx,
                jy,
                jz,
                site_i: n - 1,
                site_j: 0,
                rescale: None,
            });
        }
        self
    }

    /// Twice the spin length, `2S`. Only meaningful on a validated model.
    pub fn two_s(&self) -> u32 {
        (2.0 * self.spin_s).round() as u32
    }

    /// Hilbert-space dimension of one site, `2S + 1`.
    pub fn site_dim(&self) -> usize {
        self.two_s() as usize + 1
    }

    /// Factor applied to a term's couplings: `1/(2S)` when rescaled, else 1.
    pub fn rescale_factor<T: ModelTerm>(&self, term: &T) -> f64 {
        let rescaled = term
            .rescale_override()
            .unwrap_or(self.rescale_by_2s && term.follows_model_rescale());
        if rescaled {
            1.0 / (2.0 * self.spin_s)
        } else {
            1.0
        }
    }

    /// Effective value of `coupling` as used in the equations of motion.
    pub fn effective_coupling<T: ModelTerm>(&self, coupling: f64, term: &T) -> f64 {
        coupling * self.rescale_factor(term)
    }

    /// Checks the invariants and returns a normalized copy: "all sites" terms
    /// are expanded per site and bonds are stored with `site_i < site_j`.
    pub fn validate(&self) -> Result<SpinModel, ModelError> {
        if self.n_sites == 0 {
            return Err(ModelError::NoSites);
        }
        let two_s = 2.0 * self.spin_s;
        if !two_s.is_finite() || two_s < 0.5 || (two_s - two_s.round()).abs() > 1e-9 {
            return Err(ModelError::NonHalfIntegerSpin(self.spin_s));
        }
        let n = self.n_sites;
        let check_site = |site: usize| {
            if site >= n {
                Err(ModelError::SiteOutOfRange { site, n_sites: n })
            } else {
                Ok(())
            }
        };
        let expand = |site: SiteSpec| -> Result<Vec<usize>, ModelError> {
            match site {
                SiteSpec::All => Ok((0..n).collect()),
                SiteSpec::Site(i) => check_site(i).map(|_| vec![i]),
            }
        };

        let mut hamiltonian = Vec::with_capacity(self.hamiltonian.len());
        for term in &self.hamiltonian {
            let finite = match term {
                HamiltonianTerm::TransverseDrive { omega: c, .. }
                | HamiltonianTerm::LongitudinalField { delta: c, .. }
                | HamiltonianTerm::OneAxisTwist { g: c, .. } => c.is_finite(),
                HamiltonianTerm::HeisenbergBond { jx, jy, jz, .. } => {
                    jx.is_finite() && jy.is_finite() && jz.is_finite()
                }
            };
            if !finite {
                return Err(ModelError::NonFiniteCoefficient(term.name()));
            }
            match *term {
                HamiltonianTerm::TransverseDrive { omega, site, rescale } => {
                    for s in expand(site)? {
                        hamiltonian.push(HamiltonianTerm::TransverseDrive {
                            omega,
                            site: SiteSpec::Site(s),
                            rescale,
                        });
                    }
                }
                HamiltonianTerm::LongitudinalField { delta, site, rescale } => {
                    for s in expand(site)? {
                        hamiltonian.push(HamiltonianTerm::LongitudinalField {
                            delta,
                            site: SiteSpec::Site(s),
                            rescale,
                        });
                    }
                }
                HamiltonianTerm::OneAxisTwist { g, site, rescale } => {
                    for s in expand(site)? {
                        hamiltonian.push(HamiltonianTerm::OneAxisTwist {
                            g,
                            site: SiteSpec::Site(s),
                            rescale,
                        });
                    }
                }
                HamiltonianTerm::HeisenbergBond { jx, jy, jz, site_i, site_j, rescale } => {
                    check_site(site_i)?;
                    check_site(site_j)?;
                    if site_i == site_j {
                        return Err(ModelError::SelfBond(site_i));
                    }
                    let (lo, hi) = (site_i.min(site_j), site_i.max(site_j));
                    if self.boundary == Boundary::Open && n > 2 && lo == 0 && hi == n - 1 {
                        return Err(ModelError::WrapAroundBond(site_i, site_j));
                    }
                    hamiltonian.push(HamiltonianTerm::HeisenbergBond {
                        jx,
                        jy,
                        jz,
                        site_i: lo,
                        site_j: hi,
                        rescale,
                    });
                }
            }
        }

        let mut dissipators = Vec::with_capacity(self.dissipators.len());
        for term in &self.dissipators {
            let (DissipatorTerm::Decay { gamma, site, rescale }
            | DissipatorTerm::Gain { gamma, site, rescale }
            | DissipatorTerm::Dephasing { gamma, site, rescale }) = *term;
            if !gamma.is_finite() {
                return Err(ModelError::NonFiniteCoefficient(term.name()));
            }
            if gamma < 0.0 {
                return Err(ModelError::NegativeRate { term: term.name(), rate: gamma });
            }
            for s in expand(site)? {
                let site = SiteSpec::Site(s);
                dissipators.push(match term {
                    DissipatorTerm::Decay { .. } => DissipatorTerm::Decay { gamma, site, rescale },
                    DissipatorTerm::Gain { .. } => DissipatorTerm::Gain { gamma, site, rescale },
                    DissipatorTerm::Dephasing { .. } => {
                        DissipatorTerm::Dephasing { gamma, site, rescale }
                    }
                });
            }
        }

        Ok(SpinModel {
            n_sites: n,
            spin_s: two_s.round() / 2.0,
            hamiltonian,
            dissipators,
            boundary: self.boundary,
            rescale_by_2s: self.rescale_by_2s,
        })
    }

    /// Validates and flattens every term into its effective form.
    pub fn resolve(&self) -> Result<Vec<ResolvedTerm>, ModelError> {
        let model = self.validate()?;
        let site_of = |s: SiteSpec| match s {
            SiteSpec::Site(i) => i,
            SiteSpec::All => unreachable!("validated models have concrete sites"),
        };
        let mut out = Vec::with_capacity(model.hamiltonian.len() + model.dissipators.len());
        for term in &model.hamiltonian {
            let f = model.rescale_factor(term);
            out.push(match *term {
                HamiltonianTerm::TransverseDrive { omega, site, .. } => {
                    ResolvedTerm::Drive { omega: omega * f, site: site_of(site) }
                }
                HamiltonianTerm::LongitudinalField { delta, site, .. } => {
                    ResolvedTerm::Field { delta: delta * f, site: site_of(site) }
                }
                HamiltonianTerm::OneAxisTwist { g, site, .. } => {
                    ResolvedTerm::Twist { g: g * f, site: site_of(site) }
                }
                HamiltonianTerm::HeisenbergBond { jx, jy, jz, site_i, site_j, .. } => {
                    ResolvedTerm::Bond { jx: jx * f, jy: jy * f, jz: jz * f, i: site_i, j: site_j }
                }
            });
        }
        for term in &model.dissipators {
            let f = model.rescale_factor(term);
            out.push(match *term {
                DissipatorTerm::Decay { gamma, site, .. } => {
                    ResolvedTerm::Decay { gamma: gamma * f, site: site_of(site) }
                }
                DissipatorTerm::Gain { gamma, site, .. } => {
                    ResolvedTerm::Gain { gamma: gamma * f, site: site_of(site) }
                }
                DissipatorTerm::Dephasing { gamma, site, .. } => {
                    ResolvedTerm::Dephasing { gamma: gamma * f, site: site_of(site) }
                }
            });
        }
        Ok(out)
    }

    /// True when every site carries the same set of local terms and every site
    /// has the same bond pattern up to translation (needed for `C(s)`).
    pub fn is_translation_invariant(&self) -> bool {
        let Ok(terms) = self.resolve() else {
            return false;
        };
        let n = self.n_sites;
        let shift = |t: &ResolvedTerm| -> ResolvedTerm {
            let next = |i: usize| (i + 1) % n;
            match *t {
                ResolvedTerm::Drive { omega, site } => ResolvedTerm::Drive { omega, site: next(site) },
                ResolvedTerm::Field { delta, site } => ResolvedTerm::Field { delta, site: next(site) },
                ResolvedTerm::Twist { g, site } => ResolvedTerm::Twist { g, site: next(site) },
                ResolvedTerm::Decay { gamma, site } => ResolvedTerm::Decay { gamma, site: next(site) },
                ResolvedTerm::Gain { gamma, site } => ResolvedTerm::Gain { gamma, site: next(site) },
                ResolvedTerm::Dephasing { gamma, site } => {
                    ResolvedTerm::Dephasing { gamma, site: next(site) }
                }
                ResolvedTerm::Bond { jx, jy, jz, i, j } => {
                    let (a, b) = (next(i), next(j));
                    ResolvedTerm::Bond { jx, jy, jz, i: a.min(b), j: a.max(b) }
                }
            }
        };
        terms.iter().all(|t| {
            let s = shift(t);
            terms.iter().any(|u| *u == s)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay(gamma: f64) -> DissipatorTerm {
        DissipatorTerm::Decay { gamma, site: SiteSpec::All, rescale: None }
    }

    #[test]
    fn single_site_superradiance_is_valid() {
        let m = SpinModel::new(1, 100.0).with_dissipator(decay(1.0));
        let v = m.validate().unwrap();
        assert_eq!(v.two_s(), 200);
        assert_eq!(
            v.dissipators,
            vec![DissipatorTerm::Decay { gamma: 1.0, site: SiteSpec::Site(0), rescale: None }]
        );
    }

    #[test]
    fn periodic_wrap_bond_is_legal() {
        let m = SpinModel::new(100, 0.5)
            .with_boundary(Boundary::Periodic)
            .with_term(HamiltonianTerm::HeisenbergBond {
                jx: 1.0,
                jy: 1.0,
                jz: 0.0,
                site_i: 99,
                site_j: 0,
                rescale: None,
            });
        let v = m.validate().unwrap();
        match v.hamiltonian[0] {
            HamiltonianTerm::HeisenbergBond { site_i, site_j, .. } => {
                assert_eq!((site_i, site_j), (0, 99))
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn wrap_bond_on_open_chain_is_rejected() {
        let m = SpinModel::new(5, 1.0).with_term(HamiltonianTerm::HeisenbergBond {
            jx: 1.0,
            jy: 0.0,
            jz: 0.0,
            site_i: 4,
            site_j: 0,
            rescale: None,
        });
        assert_eq!(m.validate(), Err(ModelError::WrapAroundBond(4, 0)));
    }

    #[test]
    fn negative_rate_is_rejected() {
        let m = SpinModel::new(1, 10.0).with_dissipator(decay(-0.5));
        let err = m.validate().unwrap_err();
        assert!(matches!(err, ModelError::NegativeRate { rate, .. } if rate == -0.5));
        assert!(err.to_string().contains("negative rate"));
    }

    #[test]
    fn bad_spin_and_sites() {
        assert_eq!(
            SpinModel::new(1, 0.3).validate(),
            Err(ModelError::NonHalfIntegerSpin(0.3))
        );
        assert_eq!(SpinModel::new(0, 1.0).validate(), Err(ModelError::NoSites));
        let m = SpinModel::new(2, 1.0).with_dissipator(DissipatorTerm::Gain {
            gamma: 1.0,
            site: SiteSpec::Site(2),
            rescale: None,
        });
        assert_eq!(m.validate(), Err(ModelError::SiteOutOfRange { site: 2, n_sites: 2 }));
        let m = SpinModel::new(2, 1.0).with_term(HamiltonianTerm::HeisenbergBond {
            jx: 1.0,
            jy: 0.0,
            jz: 0.0,
            site_i: 1,
            site_j: 1,
            rescale: None,
        });
        assert_eq!(m.validate(), Err(ModelError::SelfBond(1)));
    }

    #[test]
    fn effective_couplings() {
        let term = decay(1.0);
        let on = SpinModel::new(1, 100.0);
        assert!((on.effective_coupling(1.0, &term) - 0.005).abs() < 1e-15);
        let off = SpinModel::new(1, 100.0).with_rescale(false);
        assert_eq!(off.effective_coupling(1.0, &term), 1.0);
        let half = SpinModel::new(1, 0.5);
        let twist = HamiltonianTerm::OneAxisTwist { g: 2.0, site: SiteSpec::All, rescale: None };
        assert_eq!(half.effective_coupling(2.0, &twist), 2.0);
    }

    #[test]
    fn dephasing_and_drive_are_not_rescaled_by_default() {
        let m = SpinModel::new(1, 10.0)
            .with_term(HamiltonianTerm::TransverseDrive { omega: 1.0, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Dephasing { gamma: 0.5, site: SiteSpec::All, rescale: None })
            .with_dissipator(DissipatorTerm::Dephasing {
                gamma: 0.5,
                site: SiteSpec::All,
                rescale: Some(true),
            });
        let terms = m.resolve().unwrap();
        assert_eq!(terms[0], ResolvedTerm::Drive { omega: 1.0, site: 0 });
        assert_eq!(terms[1], ResolvedTerm::Dephasing { gamma: 0.5, site: 0 });
        assert_eq!(terms[2], ResolvedTerm::Dephasing { gamma: 0.025, site: 0 });
    }

    #[test]
    fn chain_constructor_and_translation_invariance() {
        let m = SpinModel::new(6, 2.0)
            .with_boundary(Boundary::Periodic)
            .with_heisenberg_chain(0.5, -1.0, 0.0)
            .with_dissipator(decay(1.0));
        assert_eq!(m.hamiltonian.len(), 6);
        assert!(m.is_translation_invariant());
        let open = SpinModel::new(6, 2.0).with_heisenberg_chain(0.5, -1.0, 0.0);
        assert_eq!(open.hamiltonian.len(), 5);
        assert!(!open.is_translation_invariant());
    }

    #[test]
    fn json_schema_rejects_unknown_keys() {
        let ok = r#"{"n_sites": 1, "spin_s": 10,
            "hamiltonian": [{"kind": "transverse_drive", "omega": 1.0}],
            "dissipators": [{"kind": "decay", "gamma": 1.0, "site": "all"}]}"#;
        let m: SpinModel = serde_json::from_str(ok).unwrap();
        assert!(m.validate().is_ok());
        let bad = r#"{"n_sites": 1, "spin_s": 10, "colour": "red"}"#;
        assert!(serde_json::from_str::<SpinModel>(bad).is_err());
        let bad_term = r#"{"n_sites": 1, "spin_s": 10,
            "dissipators": [{"kind": "decay", "gamma": 1.0, "rate": 2.0}]}"#;
        assert!(serde_json::from_str::<SpinModel>(bad_term).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_model() -> impl Strategy<Value = SpinModel> {
            (1usize..6, 1u32..40, proptest::collection::vec((0.0f64..3.0, 0usize..7), 0..5), any::<bool>())
                .prop_map(|(n, two_s, rates, periodic)| {
                    let mut m = SpinModel::new(n, two_s as f64 / 2.0).with_boundary(if periodic {
                        Boundary::Periodic
                    } else {
                        Boundary::Open
                    });
                    for (g, s) in rates {
                        let site = if s >= n { SiteSpec::All } else { SiteSpec::Site(s) };
                        m = m.with_dissipator(DissipatorTerm::Decay { gamma: g, site, rescale: None });
                        m = m.with_term(HamiltonianTerm::TransverseDrive { omega: g, site, rescale: None });
                    }
                    m.with_heisenberg_chain(0.3, -0.2, 0.1)
                })
        }

        proptest! {
            #[test]
            fn validate_is_idempotent(m in arb_model()) {
                let once = m.validate().unwrap();
                let twice = once.validate().unwrap();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn effective_couplings_are_linear(c in -5.0f64..5.0, d in -5.0f64..5.0, two_s in 1u32..50) {
                let m = SpinModel::new(1, two_s as f64 / 2.0);
                let t = DissipatorTerm::Decay { gamma: 1.0, site: SiteSpec::All, rescale: None };
                let lhs = m.effective_coupling(c + 2.0 * d, &t);
                let rhs = m.effective_coupling(c, &t) + 2.0 * m.effective_coupling(d, &t);
                prop_assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }
}
