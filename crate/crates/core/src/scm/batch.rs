use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::graph::NodeSet;

/// Which nodes play which part in an experiment. `W` defaults to `A ∪ X ∪ S`
/// when absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roles {
    #[serde(rename = "A", default)]
    pub a: Vec<String>,
    #[serde(rename = "X", default)]
    pub x: Vec<String>,
    #[serde(rename = "S", default)]
    pub s: Vec<String>,
    #[serde(rename = "Y", default)]
    pub y: Vec<String>,
    #[serde(rename = "W", default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<String>>,
}

fn dedup_concat(parts: &[&[String]]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for part in parts {
        for name in part.iter() {
            if !out.contains(name) {
                out.push(name.clone());
            }
        }
    }
    out
}

impl Roles {
    pub fn new(a: &[&str], x: &[&str], s: &[&str], y: &[&str]) -> Self {
        let own = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Roles {
            a: own(a),
            x: own(x),
            s: own(s),
            y: own(y),
            w: None,
        }
    }

    pub fn with_w(mut self, w: &[&str]) -> Self {
        self.w = Some(w.iter().map(|s| s.to_string()).collect());
        self
    }

    /// The penalty's conditioning-free block `W`.
    pub fn w(&self) -> Vec<String> {
        match &self.w {
            Some(w) => w.clone(),
            None => self.predictors(),
        }
    }

    /// Default predictor inputs, `A ∪ X ∪ S` in that order.
    pub fn predictors(&self) -> Vec<String> {
        dedup_concat(&[&self.a, &self.x, &self.s])
    }

    /// Columns entering the penalty's `A ∪ W` kernel.
    pub fn a_union_w(&self) -> Vec<String> {
        dedup_concat(&[&self.a, &self.w()])
    }

    pub fn set(names: &[String]) -> NodeSet {
        names.iter().cloned().collect()
    }

    pub(crate) fn validate(&self, exists: impl Fn(&str) -> bool) -> Result<()> {
        let w = self.w.clone().unwrap_or_default();
        for name in self
            .a
            .iter()
            .chain(&self.x)
            .chain(&self.s)
            .chain(&self.y)
            .chain(&w)
        {
            if !exists(name) {
                return config(format!("role refers to unknown node `{name}`"));
            }
        }
        let a = Roles::set(&self.a);
        let y = Roles::set(&self.y);
        let s = Roles::set(&self.s);
        if !a.is_disjoint(&y) || !s.is_disjoint(&y) || !Roles::set(&self.x).is_disjoint(&y) {
            return config("Y must be disjoint from A, X and S");
        }
        if !a.is_disjoint(&s) {
            return config("A and S must be disjoint");
        }
        Ok(())
    }
}

/// A sample of `n` units: one `n × dim` block per node, and optionally the
/// exogenous draws that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    n: usize,
    order: Vec<String>,
    columns: BTreeMap<String, DMatrix<f64>>,
    noise: Option<BTreeMap<String, DMatrix<f64>>>,
    roles: Roles,
}

impl SampleBatch {
    pub fn new(
        order: Vec<String>,
        columns: BTreeMap<String, DMatrix<f64>>,
        noise: Option<BTreeMap<String, DMatrix<f64>>>,
        roles: Roles,
    ) -> Result<Self> {
        let n = order
            .first()
            .and_then(|name| columns.get(name))
            .map(|m| m.nrows())
            .ok_or_else(|| Error::Config("a batch needs at least one column".into()))?;
        if order.len() != columns.len() || order.iter().any(|o| !columns.contains_key(o)) {
            return config("column order does not match the column set");
        }
        for (name, m) in columns.iter().chain(noise.iter().flatten()) {
            if m.nrows() != n {
                return Err(Error::Dimension(format!(
                    "column `{name}` has {} rows, expected {n}",
                    m.nrows()
                )));
            }
        }
        if let Some(noise) = &noise {
            for (name, m) in noise {
                match columns.get(name) {
                    Some(c) if c.ncols() == m.ncols() => {}
                    _ => {
                        return Err(Error::Dimension(format!(
                            "noise for `{name}` has no matching column"
                        )))
                    }
                }
            }
        }
        roles.validate(|name| columns.contains_key(name))?;
        Ok(SampleBatch {
            n,
            order,
            columns,
            noise,
            roles,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> &[String] {
        &self.order
    }

    pub fn roles(&self) -> &Roles {
        &self.roles
    }

    pub fn with_roles(mut self, roles: Roles) -> Result<Self> {
        roles.validate(|name| self.columns.contains_key(name))?;
        self.roles = roles;
        Ok(self)
    }

    pub fn dims(&self) -> BTreeMap<String, usize> {
        self.columns
            .iter()
            .map(|(k, v)| (k.clone(), v.ncols()))
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.columns
            .get(name)
            .ok_or_else(|| Error::Config(format!("batch has no column `{name}`")))
    }

    pub fn noise_column(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.noise.as_ref().and_then(|m| m.get(name))
    }

    pub fn has_noise(&self) -> bool {
        self.noise.is_some()
    }

    pub fn without_noise(mut self) -> Self {
        self.noise = None;
        self
    }

    /// Side-by-side concatenation of the named columns. An empty list gives
    /// an `n × 0` matrix.
    pub fn concat<S: AsRef<str>>(&self, names: &[S]) -> Result<DMatrix<f64>> {
        let blocks: Vec<&DMatrix<f64>> = names
            .iter()
            .map(|n| self.column(n.as_ref()))
            .collect::<Result<_>>()?;
        let width: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut out = DMatrix::zeros(self.n, width);
        let mut c = 0;
        for b in blocks {
            out.columns_mut(c, b.ncols()).copy_from(b);
            c += b.ncols();
        }
        Ok(out)
    }

    pub fn replace_column(&mut self, name: &str, value: DMatrix<f64>) -> Result<()> {
        let slot = self
            .columns
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("batch has no column `{name}`")))?;
        if value.shape() != slot.shape() {
            return Err(Error::Dimension(format!(
                "replacement for `{name}` has the wrong shape"
            )));
        }
        *slot = value;
        Ok(())
    }

    pub fn select_rows(&self, rows: &[usize]) -> SampleBatch {
        let pick =
            |m: &DMatrix<f64>| DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)]);
        SampleBatch {
            n: rows.len(),
            order: self.order.clone(),
            columns: self
                .columns
                .iter()
                .map(|(k, v)| (k.clone(), pick(v)))
                .collect(),
            noise: self
                .noise
                .as_ref()
                .map(|nz| nz.iter().map(|(k, v)| (k.clone(), pick(v))).collect()),
            roles: self.roles.clone(),
        }
    }

    /// First `round(frac · n)` rows for training, the rest for testing. Rows
    /// are i.i.d. draws, so a prefix split is as good as a shuffled one.
    pub fn split(&self, train_frac: f64) -> Result<(SampleBatch, SampleBatch)> {
        if !(train_frac > 0.0 && train_frac < 1.0) {
            return config(format!("train fraction {train_frac} must lie in (0, 1)"));
        }
        let cut = ((self.n as f64) * train_frac).round() as usize;
        if cut == 0 || cut == self.n {
            return config("split leaves an empty partition");
        }
        let train: Vec<usize> = (0..cut).collect();
        let test: Vec<usize> = (cut..self.n).collect();
        Ok((self.select_rows(&train), self.select_rows(&test)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> SampleBatch {
        let cols: BTreeMap<_, _> = [
            (
                "A".to_string(),
                DMatrix::from_row_slice(4, 1, &[1.0, 2.0, 3.0, 4.0]),
            ),
            (
                "Y".to_string(),
                DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]),
            ),
        ]
        .into();
        SampleBatch::new(
            vec!["A".into(), "Y".into()],
            cols,
            None,
            Roles::new(&["A"], &[], &[], &["Y"]),
        )
        .unwrap()
    }

    #[test]
    fn default_w_is_predictors() {
        let r = Roles::new(&["A"], &["X"], &["Z"], &["Y"]);
        assert_eq!(r.w(), vec!["A", "X", "Z"]);
        assert_eq!(r.a_union_w(), vec!["A", "X", "Z"]);
        let r = r.with_w(&["A"]);
        assert_eq!(r.a_union_w(), vec!["A"]);
    }

    #[test]
    fn roles_serialize_with_tags() {
        let r = Roles::new(&["A"], &[], &["X"], &["Y"]).with_w(&["A"]);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, r#"{"A":["A"],"X":[],"S":["X"],"Y":["Y"],"W":["A"]}"#);
        assert_eq!(serde_json::from_str::<Roles>(&json).unwrap(), r);
    }

    #[test]
    fn concat_and_split() {
        let b = batch();
        let m = b.concat(&["Y", "A"]).unwrap();
        assert_eq!(
            m.row(1).iter().copied().collect::<Vec<_>>(),
            vec![2.0, 3.0, 2.0]
        );
        assert_eq!(b.concat::<&str>(&[]).unwrap().shape(), (4, 0));
        let (tr, te) = b.split(0.75).unwrap();
        assert_eq!((tr.n(), te.n()), (3, 1));
        assert_eq!(te.column("A").unwrap()[(0, 0)], 4.0);
        assert!(b.split(1.0).is_err());
    }

    #[test]
    fn overlapping_roles_rejected() {
        let b = batch();
        assert!(b.with_roles(Roles::new(&["A"], &[], &[], &["A"])).is_err());
    }
}
