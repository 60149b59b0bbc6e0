//! Built-in data-generating processes.
//!
//! Normal noise parameters are `(mean, variance)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NodeSpec, NoiseSpec, Roles, Scm};
use crate::error::{config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpName {
    SyntheticC1,
    Scenario1,
    Scenario2,
    MultidimA,
    CausalG1,
    AnticausalG1,
}

impl DgpName {
    pub const ALL: [DgpName; 6] = [
        DgpName::SyntheticC1,
        DgpName::Scenario1,
        DgpName::Scenario2,
        DgpName::MultidimA,
        DgpName::CausalG1,
        DgpName::AnticausalG1,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DgpName::SyntheticC1 => "synthetic_c1",
            DgpName::Scenario1 => "scenario1",
            DgpName::Scenario2 => "scenario2",
            DgpName::MultidimA => "multidim_a",
            DgpName::CausalG1 => "causal_g1",
            DgpName::AnticausalG1 => "anticausal_g1",
        }
    }
}

impl fmt::Display for DgpName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DgpName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DgpName::ALL
            .into_iter()
            .find(|d| d.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown dgp `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DgpParams {
    /// Dimension of `A` for `multidim_a`; ignored elsewhere.
    pub dim_a: usize,
    /// Reads the trailing term of `synthetic_c1`'s `X` equation as
    /// `+ 2Z + ε_X/5` instead of the product `2Z · ε_X/5`.
    pub c1_additive_z: bool,
}

impl Default for DgpParams {
    fn default() -> Self {
        DgpParams {
            dim_a: 2,
            c1_additive_z: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpId {
    pub name: DgpName,
    #[serde(default)]
    pub params: DgpParams,
}

impl Default for DgpId {
    fn default() -> Self {
        DgpId::new(DgpName::SyntheticC1)
    }
}

impl DgpId {
    pub fn new(name: DgpName) -> Self {
        DgpId {
            name,
            params: DgpParams::default(),
        }
    }

    pub fn with_dim_a(mut self, dim: usize) -> Self {
        self.params.dim_a = dim;
        self
    }
}

pub fn dgp_catalog(id: &DgpId) -> Result<Scm> {
    let (nodes, roles) = match id.name {
        DgpName::SyntheticC1 => synthetic_c1(id.params.c1_additive_z),
        DgpName::Scenario1 => scenario1(),
        DgpName::Scenario2 => scenario2(),
        DgpName::MultidimA => {
            if id.params.dim_a < 2 {
                return config("multidim_a needs dim_a >= 2");
            }
            multidim_a(id.params.dim_a)
        }
        DgpName::CausalG1 => causal_g1(),
        DgpName::AnticausalG1 => anticausal_g1(),
    };
    Ok(Scm::new(nodes, roles)?.with_source(id.clone()))
}

fn unit() -> NoiseSpec {
    NoiseSpec::standard()
}

fn small() -> NoiseSpec {
    NoiseSpec::normal(0.0, 0.1)
}

fn synthetic_c1(additive: bool) -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        NodeSpec::new("A", 1, &["Z"], unit(), |p, u, out| {
            let z = p[0][0];
            out[0] = z * z + u[0];
        }),
        NodeSpec::new("X", 1, &["A", "Z"], small(), move |p, u, out| {
            let (a, z) = (p[0][0], p[1][0]);
            let head = (-a * a / 2.0).exp() * (2.0 * a).sin();
            out[0] = if additive {
                head + 2.0 * z + u[0] / 5.0
            } else {
                head + 2.0 * z * (u[0] / 5.0)
            };
        }),
        NodeSpec::new("Y", 1, &["X", "Z", "A"], small(), |p, u, out| {
            let (x, z, a) = (p[0][0], p[1][0], p[2][0]);
            out[0] = 0.5 * (-x * z).exp() * (2.0 * x * z).sin() + 5.0 * a + u[0] / 5.0;
        }),
    ];
    (nodes, Roles::new(&["A"], &["X"], &["Z"], &["Y"]))
}

fn scenario_a() -> NodeSpec {
    NodeSpec::new("A", 1, &["Z"], unit(), |p, u, out| {
        let z = p[0][0];
        out[0] = (z * z / 2.0).exp() * (2.0 * z).sin() + u[0];
    })
}

fn scenario1() -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        scenario_a(),
        NodeSpec::new("X", 1, &["A", "Z"], unit(), |p, u, out| {
            out[0] = (p[0][0] + 0.1 * p[1][0]) * u[0];
        }),
        // ε_Y is drawn to keep stream positions aligned but does not enter Y.
        NodeSpec::new("Y", 1, &["A", "X", "Z"], small(), |p, _u, out| {
            out[0] = p[0][0] + p[1][0] + 0.1 * p[2][0].sin();
        }),
    ];
    (nodes, Roles::new(&["A"], &["X"], &["Z"], &["Y"]))
}

fn scenario2() -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        scenario_a(),
        NodeSpec::new("X", 1, &["A", "Z"], unit(), |p, u, out| {
            let (a, z) = (p[0][0], p[1][0]);
            out[0] = (-a * a / 2.0).exp() * u[0] + 2.0 * z;
        }),
        NodeSpec::new("Y", 1, &["Z", "X"], small(), |p, u, out| {
            let zx = p[0][0] * p[1][0];
            out[0] = 0.5 * zx.sin() * (-zx).exp() + u[0] / 5.0;
        }),
    ];
    (nodes, Roles::new(&["A"], &["X"], &["Z"], &["Y"]))
}

fn multidim_a(dim: usize) -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        NodeSpec::new("A", dim, &["Z"], unit(), |p, u, out| {
            let z2 = p[0][0] * p[0][0];
            for (o, e) in out.iter_mut().zip(u) {
                *o = z2 + e;
            }
        }),
        NodeSpec::new("X", 1, &["A", "Z"], small(), |p, u, out| {
            let (a, z) = (p[0], p[1][0]);
            let sum: f64 = a.iter().sum();
            out[0] = (-a[0] / 2.0).exp() + sum * z.sin() + 0.1 * u[0];
        }),
        NodeSpec::new("Y", 1, &["A", "X", "Z"], small(), |p, u, out| {
            let (a, x, z) = (p[0], p[1][0], p[2][0]);
            let sum: f64 = a.iter().sum();
            out[0] = (-a[1] / 2.0).exp() * sum + x * z + 0.1 * u[0];
        }),
    ];
    (nodes, Roles::new(&["A"], &["X"], &["Z"], &["Y"]))
}

/// `Z` confounds `A` and `Y` but is latent: it is not an input and the
/// conditioning set is empty.
fn causal_g1() -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        NodeSpec::new("A", 1, &["Z"], unit(), |p, u, out| {
            out[0] = (0.1 * p[0][0]).sin() + u[0];
        }),
        NodeSpec::new("X", 1, &["A"], unit(), |p, u, out| {
            let a = p[0][0];
            out[0] = (-a / 2.0).exp() * a.sin() + 0.1 * u[0];
        }),
        NodeSpec::new("Y", 1, &["X", "Z", "A"], small(), |p, u, out| {
            let (x, z, a) = (p[0][0], p[1][0], p[2][0]);
            out[0] = 0.1 * (-x).exp() * (2.0 * x * z).sin() + a * a + 0.1 * u[0];
        }),
    ];
    (nodes, Roles::new(&["A"], &["X"], &[], &["Y"]))
}

/// `X` is a common child of `A` and `Y`; conditioning is on `X` and the
/// penalty's `A ∪ W` block is `A` alone.
fn anticausal_g1() -> (Vec<NodeSpec>, Roles) {
    let nodes = vec![
        NodeSpec::exogenous("Z", 1, unit()),
        NodeSpec::new("A", 1, &["Z"], small(), |p, u, out| {
            out[0] = 0.2 * p[0][0].sin() + u[0];
        }),
        NodeSpec::new("Y", 1, &["Z"], small(), |p, u, out| {
            out[0] = 0.1 * p[0][0].sin() + u[0];
        }),
        NodeSpec::new("X", 1, &["A", "Y"], unit(), |p, u, out| {
            out[0] = p[0][0] + p[1][0] + 0.1 * u[0];
        }),
    ];
    (
        nodes,
        Roles::new(&["A"], &[], &["X"], &["Y"]).with_w(&["A"]),
    )
}
