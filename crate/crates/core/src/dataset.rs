//! Sample-triplet datasets {x_k, S(x_k,t), grad S(x_k,t)} and their file format.
//!
//! File layout: one header line `dim,t,a,seed,count` (values, in that order)
//! followed by `count` CSV rows `x_1..x_n,S,g_1..g_n`. Floats are written in
//! shortest round-trip decimal, so parse(emit(ds)) == ds exactly.

use crate::{Error, Point, Result, TimeParam};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleTriplet {
    pub x: Point,
    /// S(x, t)
    pub s_value: f64,
    /// grad_x S(x, t)
    pub s_grad: Point,
}

impl SampleTriplet {
    pub fn new(x: Point, s_value: f64, s_grad: Point, t: TimeParam) -> Result<Self> {
        crate::check_point(&x)?;
        if s_grad.len() != x.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: s_grad.len(),
            });
        }
        if !s_value.is_finite() || s_grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite sample values", &x));
        }
        let trip = SampleTriplet { x, s_value, s_grad };
        let y = trip.y(t);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::numeric(
                "derived point y = x - t*gradS is non-finite",
                &trip.x,
            ));
        }
        Ok(trip)
    }

    /// The minimizer recovered from the sample: y = x - t * grad S(x,t).
    pub fn y(&self, t: TimeParam) -> Point {
        self.x
            .iter()
            .zip(&self.s_grad)
            .map(|(x, g)| x - t.get() * g)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub t: TimeParam,
    pub dim: usize,
    /// Sampling box halfwidth; samples live in [-a, a]^dim.
    pub a: f64,
    pub seed: u64,
    pub samples: Vec<SampleTriplet>,
}

impl Dataset {
    pub fn new(
        t: TimeParam,
        dim: usize,
        a: f64,
        seed: u64,
        samples: Vec<SampleTriplet>,
    ) -> Result<Self> {
        if dim < 1 {
            return Err(Error::invalid("dataset dim must be >= 1"));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::invalid("dataset box halfwidth must be > 0"));
        }
        for s in &samples {
            if s.x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.x.len(),
                });
            }
        }
        Ok(Dataset {
            t,
            dim,
            a,
            seed,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// psi targets: psi(x,t) = ||x||^2/2 - t S(x,t) per sample.
    pub fn psi_targets(&self) -> Vec<f64> {
        self.samples
            .iter()
            .map(|s| crate::linalg::norm_sq(&s.x) / 2.0 - self.t.get() * s.s_value)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{}",
            self.dim,
            self.t.get(),
            self.a,
            self.seed,
            self.len()
        )?;
        for s in &self.samples {
            let mut row = String::new();
            for x in &s.x {
                row.push_str(&format!("{x},"));
            }
            row.push_str(&format!("{}", s.s_value));
            for g in &s.s_grad {
                row.push_str(&format!(",{g}"));
            }
            writeln!(w, "{row}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut lines = BufReader::new(r).lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Config("empty dataset file".into()))??;
        let h: Vec<&str> = header.trim().split(',').collect();
        if h.len() != 5 {
            return Err(Error::Config(format!(
                "dataset header must be `dim,t,a,seed,count`, got {} fields",
                h.len()
            )));
        }
        let dim: usize = h[0]
            .parse()
            .map_err(|_| Error::Config("bad dim in header".into()))?;
        let t: f64 = h[1]
            .parse()
            .map_err(|_| Error::Config("bad t in header".into()))?;
        let a: f64 = h[2]
            .parse()
            .map_err(|_| Error::Config("bad a in header".into()))?;
        let seed: u64 = h[3]
            .parse()
            .map_err(|_| Error::Config("bad seed in header".into()))?;
        let count: usize = h[4]
            .parse()
            .map_err(|_| Error::Config("bad count in header".into()))?;
        let t = TimeParam::new(t)?;
        let mut samples = Vec::with_capacity(count);
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.trim().split(',').collect();
            if cells.len() != 2 * dim + 1 {
                return Err(Error::Config(format!(
                    "row {} has {} fields, expected {}",
                    i + 2,
                    cells.len(),
                    2 * dim + 1
                )));
            }
            let parse = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::Config(format!("bad float `{s}`")))
            };
            let x: Point = cells[..dim]
                .iter()
                .map(|c| parse(c))
                .collect::<Result<_>>()?;
            let s_value = parse(cells[dim])?;
            let s_grad: Point = cells[dim + 1..]
                .iter()
                .map(|c| parse(c))
                .collect::<Result<_>>()?;
            samples.push(SampleTriplet::new(x, s_value, s_grad, t)?);
        }
        if samples.len() != count {
            return Err(Error::Config(format!(
                "dataset header promised {count} rows, found {}",
                samples.len()
            )));
        }
        Dataset::new(t, dim, a, seed, samples)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(&mut f)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::DependencyMissing(format!(
                "dataset file {}",
                path.display()
            )));
        }
        Dataset::read_csv(std::fs::File::open(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t1() -> TimeParam {
        TimeParam::new(1.0).unwrap()
    }

    #[test]
    fn rejects_nonfinite() {
        assert!(SampleTriplet::new(vec![f64::NAN], 0.0, vec![0.0], t1()).is_err());
        assert!(SampleTriplet::new(vec![1.0], f64::INFINITY, vec![0.0], t1()).is_err());
    }

    #[test]
    fn derived_point() {
        let s = SampleTriplet::new(vec![2.0], -2.5, vec![-1.0], t1()).unwrap();
        assert_eq!(s.y(t1()), vec![3.0]);
    }

    #[test]
    fn header_mismatch_detected() {
        let text = "1,1,4,0,3\n0.5,0.1,0.2\n";
        assert!(Dataset::read_csv(text.as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn csv_roundtrip_is_exact(
            rows in prop::collection::vec(
                (prop::collection::vec(-1e6f64..1e6, 2),
                 -1e6f64..1e6,
                 prop::collection::vec(-1e6f64..1e6, 2)),
                1..20),
            seed in any::<u64>(),
        ) {
            let t = TimeParam::new(0.5).unwrap();
            let samples: Vec<SampleTriplet> = rows
                .into_iter()
                .map(|(x, s, g)| SampleTriplet::new(x, s, g, t).unwrap())
                .collect();
            let ds = Dataset::new(t, 2, 4.0, seed, samples).unwrap();
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            let back = Dataset::read_csv(buf.as_slice()).unwrap();
            prop_assert_eq!(ds, back);
        }
    }
}
