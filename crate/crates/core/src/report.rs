//! Experiment reports and their JSON / CSV serializations.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

/// Ordered `bin -> count` map. Serialized as a JSON object whose key order is
/// the insertion order (set sizes ascending, or set kinds).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Histogram(Vec<(String, u64)>);

impl Histogram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts of set sizes `0..counts.len()`.
    pub fn from_sizes(counts: &[u64]) -> Self {
        Self(counts.iter().enumerate().map(|(k, c)| (k.to_string(), *c)).collect())
    }

    pub fn push(&mut self, bin: impl Into<String>, count: u64) {
        self.0.push((bin.into(), count));
    }

    pub fn get(&self, bin: &str) -> Option<u64> {
        self.0.iter().find(|(b, _)| b == bin).map(|(_, c)| *c)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|(_, c)| c).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.0.iter().map(|(b, c)| (b.as_str(), *c))
    }
}

impl Serialize for Histogram {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for Histogram {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = Histogram;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a map of bin to count")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Histogram, A::Error> {
                let mut bins = Vec::new();
                while let Some((k, v)) = access.next_entry::<String, u64>()? {
                    bins.push((k, v));
                }
                Ok(Histogram(bins))
            }
        }
        d.deserialize_map(V)
    }
}

/// Outcome of a Monte Carlo coverage experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub method: String,
    pub params: BTreeMap<String, Value>,
    pub trials: u64,
    /// Empirical coverage in `[0, 1]`.
    pub coverage: f64,
    /// Standard error of `coverage`.
    pub se: f64,
    pub histogram: Histogram,
    /// Method-specific diagnostics.
    pub extras: BTreeMap<String, Value>,
}

impl CoverageReport {
    pub fn new(method: impl Into<String>) -> Self {
        Self {
            method: method.into(),
            params: BTreeMap::new(),
            trials: 0,
            coverage: 0.0,
            se: 0.0,
            histogram: Histogram::new(),
            extras: BTreeMap::new(),
        }
    }

    pub fn param(mut self, key: &str, value: impl Into<Value>) -> Self {
        self.params.insert(key.to_owned(), value.into());
        self
    }

    pub fn extra(&mut self, key: &str, value: impl Into<Value>) {
        self.extras.insert(key.to_owned(), value.into());
    }

    pub fn extra_f64(&self, key: &str) -> Option<f64> {
        self.extras.get(key).and_then(Value::as_f64)
    }

    /// Sets coverage from `hits / trials` with the binomial standard error.
    pub fn set_binomial(&mut self, hits: u64, trials: u64) {
        self.trials = trials;
        self.coverage = if trials == 0 { 1.0 } else { hits as f64 / trials as f64 };
        self.se = binomial_se(self.coverage, trials);
    }

    /// Long-format CSV: `method,field,key,value`. Arrays are flattened with
    /// their index as key; nested objects with their member name.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,field,key,value\n");
        let m = &self.method;
        let _ = writeln!(out, "{m},trials,,{}", self.trials);
        let _ = writeln!(out, "{m},coverage,,{:?}", self.coverage);
        let _ = writeln!(out, "{m},se,,{:?}", self.se);
        for (k, v) in &self.params {
            flatten(&mut out, m, &format!("param.{k}"), "", v);
        }
        for (bin, c) in self.histogram.iter() {
            let _ = writeln!(out, "{m},histogram,{bin},{c}");
        }
        for (k, v) in &self.extras {
            flatten(&mut out, m, k, "", v);
        }
        out
    }
}

fn flatten(out: &mut String, method: &str, field: &str, key: &str, v: &Value) {
    match v {
        Value::Array(items) => {
            for (i, item) in items.iter().enumerate() {
                let k = if key.is_empty() { i.to_string() } else { format!("{key}.{i}") };
                flatten(out, method, field, &k, item);
            }
        }
        Value::Object(map) => {
            for (name, item) in map {
                let k = if key.is_empty() { name.clone() } else { format!("{key}.{name}") };
                flatten(out, method, field, &k, item);
            }
        }
        Value::String(s) => {
            let _ = writeln!(out, "{method},{field},{key},{s}");
        }
        other => {
            let _ = writeln!(out, "{method},{field},{key},{other}");
        }
    }
}

/// `sqrt(p (1 - p) / n)`; zero for `n == 0`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        0.0
    } else {
        (p * (1.0 - p) / n as f64).sqrt()
    }
}

/// Sample mean and (n - 1)-normalized standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_keeps_order() {
        let h = Histogram::from_sizes(&[1, 0, 5, 0, 0, 0, 0, 0, 0, 0, 2]);
        let j = serde_json::to_string(&h).unwrap();
        assert!(j.starts_with(r#"{"0":1,"1":0,"2":5"#));
        let back: Histogram = serde_json::from_str(&j).unwrap();
        assert_eq!(back, h);
        assert_eq!(h.total(), 8);
        assert_eq!(h.get("10"), Some(2));
    }

    #[test]
    fn json_schema_fields() {
        let mut r = CoverageReport::new("demo").param("alpha", 0.1);
        r.set_binomial(9, 10);
        r.histogram.push("finite", 10);
        r.extra("path", vec![0.0, -1.5]);
        let v: Value = serde_json::to_value(&r).unwrap();
        for key in ["method", "params", "trials", "coverage", "se", "histogram", "extras"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        let back: CoverageReport = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn csv_flattening() {
        let mut r = CoverageReport::new("demo").param("alpha", 0.1);
        r.set_binomial(1, 2);
        r.extra("path", vec![1.0, 2.0]);
        let csv = r.to_csv();
        assert!(csv.contains("demo,coverage,,0.5\n"));
        assert!(csv.contains("demo,param.alpha,,0.1\n"));
        assert!(csv.contains("demo,path,1,2.0\n"));
    }

    #[test]
    fn stats_helpers() {
        assert_eq!(binomial_se(0.5, 0), 0.0);
        assert!((binomial_se(0.5, 100) - 0.05).abs() < 1e-15);
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
    }
}
