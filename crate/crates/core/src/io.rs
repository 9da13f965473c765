//! Versioned JSON files for systems and synthesis results.
//!
//! Matrices are stored as `{"rows": r, "cols": c, "data": [...]}` with `data`
//! in row-major order. Edges are `[i, k]` pairs with 1-based nodes, where
//! `[i, k]` means that subsystem `i` is influenced by subsystem `k`.
//!
//! A system file looks like
//!
//! ```json
//! {
//!   "version": 1,
//!   "nodes": 2,
//!   "plant_edges": [[1, 2], [2, 1]],
//!   "controller_edges": [[1, 2], [2, 1]],
//!   "subsystems": [{ "dims": {...}, "a": {...}, "bu": {...}, ..., "inputs": [...], "outputs": [...] }],
//!   "links": [{ "edge": [1, 2], "p": {...} }],
//!   "classes": null,
//!   "augmentation": null
//! }
//! ```
//!
//! `dims` is redundant with the matrix shapes and is checked on load.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::analysis::{Certification, MultiplierSet, SynthesisResult};
use crate::decomposed::ClassDescriptor;
use crate::error::{Error, Result};
use crate::graph::{Edge, Topology};
use crate::linalg::Mat;
use crate::sysmodel::{
    AugmentationSpec, InChannel, InterconnectedSystem, OutChannel, StaticGains, SubsystemSS,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl From<&Mat> for MatrixJson {
    fn from(m: &Mat) -> Self {
        let data = (0..m.nrows())
            .flat_map(|i| (0..m.ncols()).map(move |j| m[(i, j)]))
            .collect();
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixJson {
    pub fn to_mat(&self) -> Result<Mat> {
        if self.data.len() != self.rows * self.cols {
            return Err(Error::Dimension(format!(
                "matrix declared {}x{} carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(Mat::from_row_slice(self.rows, self.cols, &self.data))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimsJson {
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    pub nw: usize,
    pub nz: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InChannelJson {
    pub from: usize,
    pub bp: MatrixJson,
    pub dyp: MatrixJson,
    pub dzp: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutChannelJson {
    pub to: usize,
    pub cq: MatrixJson,
    pub dqw: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubsystemJson {
    pub dims: DimsJson,
    pub a: MatrixJson,
    pub bu: MatrixJson,
    pub bw: MatrixJson,
    pub cy: MatrixJson,
    pub cz: MatrixJson,
    pub dyw: MatrixJson,
    pub dzu: MatrixJson,
    pub dzw: MatrixJson,
    #[serde(default)]
    pub inputs: Vec<InChannelJson>,
    #[serde(default)]
    pub outputs: Vec<OutChannelJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeMatrixJson {
    pub edge: Edge,
    pub p: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AugmentationJson {
    pub s: MatrixJson,
    pub t: MatrixJson,
    pub m_q: MatrixJson,
    pub m_r: MatrixJson,
    pub z_dims: Vec<usize>,
    pub w_dims: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SystemJson {
    pub version: u32,
    pub nodes: usize,
    pub plant_edges: Vec<Edge>,
    /// Defaults to the plant edges when absent.
    #[serde(default)]
    pub controller_edges: Option<Vec<Edge>>,
    pub subsystems: Vec<SubsystemJson>,
    #[serde(default)]
    pub links: Vec<EdgeMatrixJson>,
    #[serde(default)]
    pub classes: Option<ClassDescriptor>,
    #[serde(default)]
    pub augmentation: Option<AugmentationJson>,
}

/// A loaded system file.
#[derive(Clone, Debug)]
pub struct SystemFile {
    pub system: InterconnectedSystem,
    pub controller_topology: Topology,
    pub classes: Option<ClassDescriptor>,
    pub augmentation: Option<AugmentationSpec>,
}

impl SystemFile {
    pub fn new(system: InterconnectedSystem, controller_topology: Topology) -> Self {
        Self {
            system,
            controller_topology,
            classes: None,
            augmentation: None,
        }
    }

    pub fn to_json(&self) -> SystemJson {
        let sys = &self.system;
        let m = MatrixJson::from;
        let subsystems = sys
            .subsystems
            .iter()
            .map(|s| SubsystemJson {
                dims: DimsJson {
                    nx: s.nx(),
                    nu: s.nu(),
                    ny: s.ny(),
                    nw: s.nw(),
                    nz: s.nz(),
                },
                a: m(&s.a),
                bu: m(&s.bu),
                bw: m(&s.bw),
                cy: m(&s.cy),
                cz: m(&s.cz),
                dyw: m(&s.dyw),
                dzu: m(&s.dzu),
                dzw: m(&s.dzw),
                inputs: s
                    .inputs
                    .iter()
                    .map(|c| InChannelJson {
                        from: c.from,
                        bp: m(&c.bp),
                        dyp: m(&c.dyp),
                        dzp: m(&c.dzp),
                    })
                    .collect(),
                outputs: s
                    .outputs
                    .iter()
                    .map(|c| OutChannelJson {
                        to: c.to,
                        cq: m(&c.cq),
                        dqw: m(&c.dqw),
                    })
                    .collect(),
            })
            .collect();
        SystemJson {
            version: SCHEMA_VERSION,
            nodes: sys.n(),
            plant_edges: sys.topology.edges().collect(),
            controller_edges: Some(self.controller_topology.edges().collect()),
            subsystems,
            links: sys
                .links
                .iter()
                .map(|(e, p)| EdgeMatrixJson { edge: *e, p: m(p) })
                .collect(),
            classes: self.classes.clone(),
            augmentation: self.augmentation.as_ref().map(|a| AugmentationJson {
                s: m(&a.s),
                t: m(&a.t),
                m_q: m(&a.m_q),
                m_r: m(&a.m_r),
                z_dims: a.z_dims.clone(),
                w_dims: a.w_dims.clone(),
            }),
        }
    }

    pub fn from_json(j: &SystemJson) -> Result<Self> {
        if j.version != SCHEMA_VERSION {
            return Err(Error::Precondition(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                j.version
            )));
        }
        if j.subsystems.len() != j.nodes {
            return Err(Error::Dimension(format!(
                "{} subsystems listed for {} nodes",
                j.subsystems.len(),
                j.nodes
            )));
        }
        let topology = Topology::new(j.nodes, j.plant_edges.iter().copied())?;
        let subsystems = j
            .subsystems
            .iter()
            .enumerate()
            .map(|(i, s)| subsystem(i + 1, s))
            .collect::<Result<Vec<_>>>()?;
        let links = j
            .links
            .iter()
            .map(|l| Ok((l.edge, l.p.to_mat()?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let system = InterconnectedSystem::new(topology.clone(), subsystems, links)?;
        let controller_topology = match &j.controller_edges {
            Some(edges) => Topology::edge_set(j.nodes, edges.iter().copied())?,
            None => topology.clone(),
        };
        if let Some(c) = &j.classes {
            c.validate(&topology)?;
        }
        let augmentation = j
            .augmentation
            .as_ref()
            .map(|a| -> Result<AugmentationSpec> {
                Ok(AugmentationSpec {
                    s: a.s.to_mat()?,
                    t: a.t.to_mat()?,
                    m_q: a.m_q.to_mat()?,
                    m_r: a.m_r.to_mat()?,
                    z_dims: a.z_dims.clone(),
                    w_dims: a.w_dims.clone(),
                })
            })
            .transpose()?;
        Ok(Self {
            system,
            controller_topology,
            classes: j.classes.clone(),
            augmentation,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&read_json(path)?)
    }
}

fn subsystem(i: usize, s: &SubsystemJson) -> Result<SubsystemSS> {
    let sub = SubsystemSS {
        a: s.a.to_mat()?,
        bu: s.bu.to_mat()?,
        bw: s.bw.to_mat()?,
        cy: s.cy.to_mat()?,
        cz: s.cz.to_mat()?,
        dyw: s.dyw.to_mat()?,
        dzu: s.dzu.to_mat()?,
        dzw: s.dzw.to_mat()?,
        inputs: s
            .inputs
            .iter()
            .map(|c| {
                Ok(InChannel {
                    from: c.from,
                    bp: c.bp.to_mat()?,
                    dyp: c.dyp.to_mat()?,
                    dzp: c.dzp.to_mat()?,
                })
            })
            .collect::<Result<_>>()?,
        outputs: s
            .outputs
            .iter()
            .map(|c| {
                Ok(OutChannel {
                    to: c.to,
                    cq: c.cq.to_mat()?,
                    dqw: c.dqw.to_mat()?,
                })
            })
            .collect::<Result<_>>()?,
    };
    let d = &s.dims;
    let actual = DimsJson {
        nx: sub.nx(),
        nu: sub.nu(),
        ny: sub.ny(),
        nw: sub.nw(),
        nz: sub.nz(),
    };
    if *d != actual {
        return Err(Error::Dimension(format!(
            "subsystem {i}: declared dims {d:?} but matrices give {actual:?}"
        )));
    }
    sub.validate(&format!("subsystem {i}"))?;
    Ok(sub)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GainsJson {
    pub local: Vec<MatrixJson>,
    pub edges: Vec<EdgeMatrixJson>,
}

impl From<&StaticGains> for GainsJson {
    fn from(g: &StaticGains) -> Self {
        Self {
            local: g.local.iter().map(MatrixJson::from).collect(),
            edges: g
                .edges
                .iter()
                .map(|(e, p)| EdgeMatrixJson {
                    edge: *e,
                    p: p.into(),
                })
                .collect(),
        }
    }
}

impl GainsJson {
    pub fn to_gains(&self) -> Result<StaticGains> {
        Ok(StaticGains {
            local: self
                .local
                .iter()
                .map(MatrixJson::to_mat)
                .collect::<Result<_>>()?,
            edges: self
                .edges
                .iter()
                .map(|e| Ok((e.edge, e.p.to_mat()?)))
                .collect::<Result<_>>()?,
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MultiplierJson {
    pub edge: Option<Edge>,
    pub q: MatrixJson,
    pub s: MatrixJson,
    pub r: MatrixJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateJson {
    pub analysis_gamma: f64,
    pub analysis_violation: f64,
    pub hinf: f64,
    pub spectral_abscissa: f64,
    /// Dual Lyapunov blocks `W_i`.
    pub lyapunov: Vec<MatrixJson>,
    /// Dual multipliers, per channel and then per class.
    pub multipliers: Vec<MultiplierJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdmmSummaryJson {
    pub converged: bool,
    pub iterations: usize,
    pub detected_at: Option<usize>,
    pub gamma_tilde: Vec<f64>,
    pub warning: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ResultJson {
    pub version: u32,
    pub method: String,
    pub gamma: f64,
    pub certified_gamma: f64,
    pub controller_edges: Vec<Edge>,
    pub gains: GainsJson,
    pub certificate: CertificateJson,
    pub nominal_dims: Vec<usize>,
    pub multiplier_dims: Vec<usize>,
    pub n_vars: usize,
    pub solve_seconds: f64,
    #[serde(default)]
    pub trace_file: Option<String>,
    #[serde(default)]
    pub admm: Option<AdmmSummaryJson>,
}

fn multipliers(m: &MultiplierSet) -> Vec<MultiplierJson> {
    let per_edge = m.order.iter().map(|e| {
        let b = &m.blocks[e];
        MultiplierJson {
            edge: Some(*e),
            q: (&b.q).into(),
            s: (&b.s).into(),
            r: (&b.r).into(),
        }
    });
    let per_class = m.classes.iter().map(|b| MultiplierJson {
        edge: None,
        q: (&b.q).into(),
        s: (&b.s).into(),
        r: (&b.r).into(),
    });
    per_edge.chain(per_class).collect()
}

impl ResultJson {
    pub fn from_result(r: &SynthesisResult) -> Self {
        let c: &Certification = &r.certification;
        Self {
            version: SCHEMA_VERSION,
            method: r.method.name().to_string(),
            gamma: r.gamma,
            certified_gamma: r.certified_gamma(),
            controller_edges: r.controller_topology.edges().collect(),
            gains: (&r.gains).into(),
            certificate: CertificateJson {
                analysis_gamma: c.analysis_gamma,
                analysis_violation: c.analysis_violation,
                hinf: c.hinf,
                spectral_abscissa: c.spectral_abscissa,
                lyapunov: r.lyapunov.blocks.iter().map(MatrixJson::from).collect(),
                multipliers: multipliers(&r.multipliers),
            },
            nominal_dims: r.stats.nominal_dims.clone(),
            multiplier_dims: r.stats.multiplier_dims.clone(),
            n_vars: r.stats.n_vars,
            solve_seconds: r.stats.solve_seconds,
            trace_file: None,
            admm: None,
        }
    }
}

/// Only the gains of a result file; used by `analyze`.
#[derive(Clone, Debug, Deserialize)]
pub struct GainsFile {
    pub gains: GainsJson,
    #[serde(default)]
    pub controller_edges: Option<Vec<Edge>>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, value)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{fig4_fixture, random_system, RandomDims};

    #[test]
    fn row_major_layout() {
        let m = crate::linalg::from_rows(&[&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]]);
        let j = MatrixJson::from(&m);
        assert_eq!(j.data, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(j.to_mat().unwrap(), m);
    }

    #[test]
    fn short_data_is_rejected() {
        let j = MatrixJson {
            rows: 2,
            cols: 2,
            data: vec![1.0],
        };
        assert!(matches!(j.to_mat(), Err(Error::Dimension(_))));
    }

    #[test]
    fn system_round_trip() {
        let (sys, topo) = fig4_fixture();
        let f = SystemFile::new(sys.clone(), topo.clone());
        let text = serde_json::to_string(&f.to_json()).unwrap();
        let back = SystemFile::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.system, sys);
        assert_eq!(back.controller_topology, topo);
    }

    #[test]
    fn non_trivial_links_round_trip() {
        let topo = Topology::ring(3).unwrap();
        let sys = random_system(&topo, 9, RandomDims::default(), false).unwrap();
        let mut f = SystemFile::new(sys.clone(), topo.clone());
        f.classes = Some(ClassDescriptor::homogeneous(&topo));
        let back = SystemFile::from_json(&f.to_json()).unwrap();
        assert_eq!(back.system, sys);
        assert_eq!(back.classes, f.classes);
    }

    #[test]
    fn wrong_declared_dims_are_rejected() {
        let (sys, topo) = fig4_fixture();
        let mut j = SystemFile::new(sys, topo).to_json();
        j.subsystems[0].dims.nx = 3;
        assert!(matches!(
            SystemFile::from_json(&j),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unknown_version_is_rejected() {
        let (sys, topo) = fig4_fixture();
        let mut j = SystemFile::new(sys, topo).to_json();
        j.version = 7;
        assert!(SystemFile::from_json(&j).is_err());
    }
}
