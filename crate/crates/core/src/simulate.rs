//! Reproducible Gaussian draws of `Z_n = (X_1..X_n, Y_1..Y_n)`.
//!
//! Increments are drawn from the banded factor of the differenced covariance
//! and cumulated, which gives the exact finite-`n` law of either model.

use std::io::{Read, Write};

use nalgebra::SymmetricEigen;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::BandedCholesky;
use crate::error::{LagError, Result};
use crate::rng::{standard_normals, stream_rng};
use crate::structure::{banded_differenced, deinterleave, CovKind, ModelSpec, PSD_REL_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    pub spec: ModelSpec,
    pub kind: CovKind,
    pub seed: u64,
    pub m: usize,
    /// One block-ordered vector of length `2n` per replication.
    pub data: Vec<Vec<f64>>,
}

/// Factor of the differenced covariance of `kind` at `theta`, tolerant of
/// rank deficiency (noiseless models at the edge of the lag domain).
pub fn increment_factor(spec: &ModelSpec, theta: f64, kind: CovKind) -> Result<BandedCholesky> {
    let cov = banded_differenced(spec, theta, kind)?;
    cov.cholesky_semidefinite(PSD_REL_TOL).map_err(|_| {
        let eig = SymmetricEigen::new(cov.to_dense()).eigenvalues;
        LagError::Indefinite {
            min_eigenvalue: eig.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    })
}

/// Turns standard normals into one draw of `Z_n`.
pub fn draw_with_factor(factor: &BandedCholesky, g: &[f64]) -> Vec<f64> {
    let mut z = deinterleave(&factor.mul_lower(g));
    let n = z.len() / 2;
    for block in [0, n] {
        for i in 1..n {
            z[block + i] += z[block + i - 1];
        }
    }
    z
}

/// Replication `r` of `(spec, kind, seed)`, independent of any other replication.
pub fn draw_replication(factor: &BandedCholesky, seed: u64, r: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, r);
    let g = standard_normals(&mut rng, factor.dim());
    draw_with_factor(factor, &g)
}

/// `m` independent draws of `Z_n` under `kind` at `spec.theta`.
pub fn sample(spec: &ModelSpec, kind: CovKind, seed: u64, m: usize) -> Result<SampleBatch> {
    spec.validate()?;
    if kind == CovKind::DifferencedV {
        return Err(LagError::InvalidSpec(
            "sampling is defined for the exact and surrogate models only".into(),
        ));
    }
    let factor = increment_factor(spec, spec.theta, kind)?;
    let data = (0..m as u64)
        .into_par_iter()
        .map(|r| draw_replication(&factor, seed, r))
        .collect();
    Ok(SampleBatch {
        spec: spec.clone(),
        kind,
        seed,
        m,
        data,
    })
}

const META: [&str; 7] = ["n", "rho", "v_n", "theta", "kind", "seed", "m"];

fn csv_err(e: impl std::fmt::Display) -> LagError {
    LagError::InvalidSpec(format!("batch csv: {e}"))
}

impl SampleBatch {
    /// Writes a metadata header, a column header `x1..xn,y1..yn` and one row per replication.
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
        w.write_record(META).map_err(csv_err)?;
        w.write_record([
            self.spec.n.to_string(),
            self.spec.rho.to_string(),
            self.spec.v_n.to_string(),
            self.spec.theta.to_string(),
            self.kind.to_string(),
            self.seed.to_string(),
            self.m.to_string(),
        ])
        .map_err(csv_err)?;
        let n = self.spec.n;
        let cols: Vec<String> = (1..=n)
            .map(|i| format!("x{i}"))
            .chain((1..=n).map(|i| format!("y{i}")))
            .collect();
        w.write_record(&cols).map_err(csv_err)?;
        for row in &self.data {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(csv_err)?;
        }
        w.flush().map_err(csv_err)?;
        Ok(())
    }

    /// Reads a dump produced by [`SampleBatch::write_csv`], skipping `#` comment
    /// lines. The declared regime is not part of the dump and must be supplied.
    pub fn read_csv(input: impl Read, gamma_mode: crate::structure::GammaMode) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .comment(Some(b'#'))
            .from_reader(input);
        let mut records = r.records();
        let mut next = || -> Result<csv::StringRecord> {
            records
                .next()
                .ok_or_else(|| csv_err("truncated file"))?
                .map_err(csv_err)
        };
        let head = next()?;
        if head.iter().collect::<Vec<_>>() != META {
            return Err(csv_err("unexpected metadata header"));
        }
        let meta = next()?;
        let field = |k: usize| meta.get(k).ok_or_else(|| csv_err("short metadata row"));
        let num = |k: usize| -> Result<f64> { field(k)?.parse::<f64>().map_err(csv_err) };
        let n: usize = field(0)?.parse().map_err(csv_err)?;
        let kind = match field(4)? {
            "exact" => CovKind::ExactC,
            "surrogate" => CovKind::SurrogateCtilde,
            other => return Err(csv_err(format!("unknown kind {other}"))),
        };
        let seed: u64 = field(5)?.parse().map_err(csv_err)?;
        let m: usize = field(6)?.parse().map_err(csv_err)?;
        let spec = ModelSpec::new(n, num(1)?, num(2)?, gamma_mode)?.with_theta(num(3)?);
        let _cols = next()?;
        let mut data = Vec::with_capacity(m);
        for rec in records {
            let rec = rec.map_err(csv_err)?;
            let row = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(csv_err))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != 2 * n {
                return Err(LagError::DimensionMismatch {
                    expected: 2 * n,
                    got: row.len(),
                });
            }
            data.push(row);
        }
        if data.len() != m {
            return Err(csv_err(format!("expected {m} rows, found {}", data.len())));
        }
        Ok(Self {
            spec,
            kind,
            seed,
            m,
            data,
        })
    }
}
