use std::sync::Arc;

use sha2::{Digest, Sha256};

use imex_peer::integrator::{integrate, IntegrationConfig};
use imex_peer::problems::{advection_reaction, Folded, SplitProblem};
use imex_peer::tableau::builtin_tableau;

use crate::HarnessError;

pub const REFERENCE_METHOD: &str = "IMEX-Peer4sv";
pub const REFERENCE_TOL: f64 = 1e-12;
const MAGIC: &str = "# imex-peer reference v1";

/// Solution of a problem at its end time, with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub problem: String,
    pub method: String,
    pub tol: f64,
    pub t: f64,
    pub y: Vec<f64>,
}

impl Reference {
    fn body(&self) -> String {
        let mut head = String::from("t");
        let mut row = format!("{:.17e}", self.t);
        for (i, v) in self.y.iter().enumerate() {
            head.push_str(&format!(",u{i}"));
            row.push_str(&format!(",{v:.17e}"));
        }
        format!("{head}\n{row}\n")
    }

    /// SHA-256 of the data section, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.body().as_bytes()))
    }

    pub fn to_csv(&self) -> String {
        format!(
            "{MAGIC}\n# problem={}\n# method={}\n# tol={:e}\n# sha256={}\n{}",
            self.problem,
            self.method,
            self.tol,
            self.hash(),
            self.body()
        )
    }

    /// Parses [`Reference::to_csv`] output and checks the stored hash.
    pub fn from_csv(src: &str) -> Result<Self, HarnessError> {
        let bad = |m: &str| HarnessError::Reference(m.to_string());
        let mut lines = src.lines();
        if lines.next() != Some(MAGIC) {
            return Err(bad("missing header line"));
        }
        let mut meta = std::collections::HashMap::new();
        let mut data = Vec::new();
        for line in lines {
            match line.strip_prefix("# ") {
                Some(kv) => {
                    let (k, v) = kv.split_once('=').ok_or_else(|| bad("malformed metadata"))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                None if !line.is_empty() => data.push(line),
                None => {}
            }
        }
        let get = |k: &str| meta.get(k).cloned().ok_or_else(|| bad(&format!("missing '{k}'")));
        if data.len() != 2 {
            return Err(bad("expected a header row and one data row"));
        }
        let values: Vec<f64> = data[1]
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(&format!("bad number: {e}")))?;
        if values.len() != data[0].split(',').count() || values.is_empty() {
            return Err(bad("row length does not match the header"));
        }
        let r = Reference {
            problem: get("problem")?,
            method: get("method")?,
            tol: get("tol")?.parse().map_err(|_| bad("bad tol"))?,
            t: values[0],
            y: values[1..].to_vec(),
        };
        if r.hash() != get("sha256")? {
            return Err(bad("hash mismatch"));
        }
        Ok(r)
    }
}

/// Integrates `problem` fully implicitly (F0 folded into F1) with the
/// reference method at `tol`.
pub fn compute_reference(problem: Arc<dyn SplitProblem>, tol: f64) -> Result<Reference, HarnessError> {
    let name = problem.name().to_string();
    let (t0, t_end) = problem.t_span();
    let folded = Folded::new(problem);
    let tableau = builtin_tableau(REFERENCE_METHOD)?;
    let cfg = IntegrationConfig::adaptive(tol, 1e-6 * (t_end - t0));
    let r = integrate(&folded, &tableau, &cfg)?;
    Ok(Reference {
        problem: name,
        method: REFERENCE_METHOD.to_string(),
        tol,
        t: r.t,
        y: r.y,
    })
}

/// Spatial discretization error of the advection-reaction problem on `m`
/// nodes: the scaled difference at `T` between the semi-discrete solutions
/// on `m` and `refine · m` nodes, compared at the shared nodes.
pub fn advection_spatial_error(m: usize, refine: usize, tol: f64) -> Result<f64, HarnessError> {
    if refine < 2 {
        return Err(HarnessError::Config(format!("refinement factor must be at least 2 (got {refine})")));
    }
    let coarse = compute_reference(Arc::new(advection_reaction(m)?), tol)?;
    let fine = compute_reference(Arc::new(advection_reaction(refine * m)?), tol)?;
    let restricted: Vec<f64> = (1..=m)
        .flat_map(|j| {
            let k = 2 * (j * refine - 1);
            [fine.y[k], fine.y[k + 1]]
        })
        .collect();
    Ok(crate::scaled_error(&coarse.y, &restricted))
}
