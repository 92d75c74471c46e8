//! Python bindings: backends, category tests, the cosine baseline, the
//! shared statistics, and the employment audit, exposed as plain
//! functions and a couple of thin classes. Structured reports cross the
//! boundary as ordinary dicts.

use std::sync::Arc;

use pyo3::exceptions::{PyConnectionError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBool, PyDict, PyFloat, PyList, PyNone, PyString};

use biasprobe::audit::{employment_audit, EmploymentTemplate};
use biasprobe::backend::{HttpBackend, MockBackend, StaticVectorBackend};
use biasprobe::error::BiasError;
use biasprobe::stats::PermutationConfig;
use biasprobe::stimuli::{NumberAgreement, TargetWord, Template};
use biasprobe::ModelBackend;

fn to_py_err(e: BiasError) -> PyErr {
    match e {
        BiasError::Transport(_) => PyConnectionError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn json_to_py<'py>(py: Python<'py>, value: &serde_json::Value) -> PyResult<Bound<'py, PyAny>> {
    use serde_json::Value;
    Ok(match value {
        Value::Null => PyNone::get(py).to_owned().into_any(),
        Value::Bool(b) => PyBool::new(py, *b).to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => PyFloat::new(py, n.as_f64().unwrap_or(f64::NAN)).into_any(),
        },
        Value::String(s) => PyString::new(py, s).into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (key, item) in map {
                dict.set_item(key, json_to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn report_to_py<'py, T: serde::Serialize>(py: Python<'py>, report: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(report)
        .map_err(|e| PyValueError::new_err(format!("serialization failed: {e}")))?;
    json_to_py(py, &value)
}

fn parse_number(raw: &str) -> PyResult<NumberAgreement> {
    match raw {
        "singular" => Ok(NumberAgreement::Singular),
        "plural" => Ok(NumberAgreement::Plural),
        "any" => Ok(NumberAgreement::Any),
        other => Err(PyValueError::new_err(format!(
            "number must be singular, plural, or any, got `{other}`"
        ))),
    }
}

/// A model backend: mock fixture, static vector file, or model server.
#[pyclass(frozen)]
struct Backend {
    inner: Arc<dyn ModelBackend>,
}

#[pymethods]
impl Backend {
    #[staticmethod]
    fn mock(path: &str) -> PyResult<Self> {
        Ok(Backend {
            inner: Arc::new(MockBackend::from_file(path).map_err(to_py_err)?),
        })
    }

    #[staticmethod]
    fn vectors(path: &str) -> PyResult<Self> {
        Ok(Backend {
            inner: Arc::new(StaticVectorBackend::from_file(path).map_err(to_py_err)?),
        })
    }

    #[staticmethod]
    fn http(url: &str) -> PyResult<Self> {
        Ok(Backend {
            inner: Arc::new(HttpBackend::connect(url).map_err(to_py_err)?),
        })
    }

    fn descriptor<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report_to_py(py, self.inner.descriptor())
    }

    fn vocab_contains(&self, token: &str) -> PyResult<bool> {
        self.inner.vocab_contains(token).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        let d = self.inner.descriptor();
        format!("Backend(name={:?}, kind={})", d.name, d.kind)
    }
}

/// A loaded category file: templates, targets, attributes.
#[pyclass(frozen)]
struct Category {
    inner: biasprobe::WeatCategory,
}

#[pymethods]
impl Category {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Category {
            inner: biasprobe::load_category(path).map_err(to_py_err)?,
        })
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    fn as_dict<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report_to_py(py, &self.inner)
    }

    fn __repr__(&self) -> String {
        format!("Category({:?})", self.inner.name)
    }
}

fn permutation_config(permutations: u64, exact_threshold: u64, seed: u64) -> PermutationConfig {
    PermutationConfig {
        exact_threshold,
        monte_carlo_samples: permutations,
        seed,
    }
}

/// Increased log probability of `target` given `attribute` under a
/// template; returns (p_target, p_prior, score).
#[pyfunction]
#[pyo3(signature = (backend, template_text, target, attribute, template_number="any", target_number="any"))]
fn increased_log_probability(
    backend: &Backend,
    template_text: &str,
    target: &str,
    attribute: &str,
    template_number: &str,
    target_number: &str,
) -> PyResult<(f64, f64, f64)> {
    let template = Template::new("py", template_text, parse_number(template_number)?)
        .map_err(to_py_err)?;
    let word = TargetWord::new(target, parse_number(target_number)?);
    let record =
        biasprobe::increased_log_probability(&*backend.inner, &template, &word, attribute)
            .map_err(to_py_err)?;
    Ok((record.p_target, record.p_prior, record.score))
}

/// Difference of increased log probability scores between two targets.
#[pyfunction]
#[pyo3(signature = (backend, template_text, target_one, target_two, attribute,
                    template_number="any", number_one="any", number_two="any"))]
#[allow(clippy::too_many_arguments)]
fn log_prob_bias_score(
    backend: &Backend,
    template_text: &str,
    target_one: &str,
    target_two: &str,
    attribute: &str,
    template_number: &str,
    number_one: &str,
    number_two: &str,
) -> PyResult<f64> {
    let template = Template::new("py", template_text, parse_number(template_number)?)
        .map_err(to_py_err)?;
    let one = TargetWord::new(target_one, parse_number(number_one)?);
    let two = TargetWord::new(target_two, parse_number(number_two)?);
    biasprobe::log_prob_bias_score(&*backend.inner, &template, &one, &two, attribute)
        .map_err(to_py_err)
}

/// Full category test with attribute-permutation significance; returns
/// the result and every underlying measurement as a dict.
#[pyfunction]
#[pyo3(signature = (backend, category, permutations=10_000, exact_threshold=200_000, seed=42))]
fn run_category_test<'py>(
    py: Python<'py>,
    backend: &Backend,
    category: &Category,
    permutations: u64,
    exact_threshold: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = permutation_config(permutations, exact_threshold, seed);
    let run = biasprobe::run_category_test(&*backend.inner, &category.inner, &config, seed)
        .map_err(to_py_err)?;
    report_to_py(py, &run)
}

/// Cosine association test; `mode` is "static" or "contextual".
#[pyfunction]
#[pyo3(signature = (backend, category, mode="static", permutations=10_000, exact_threshold=200_000, seed=42))]
fn weat_test<'py>(
    py: Python<'py>,
    backend: &Backend,
    category: &Category,
    mode: &str,
    permutations: u64,
    exact_threshold: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = permutation_config(permutations, exact_threshold, seed);
    let (x, y, a, b, prep) = match mode {
        "static" => biasprobe::static_word_sets(&*backend.inner, &category.inner, seed)
            .map_err(to_py_err)?,
        "contextual" => biasprobe::contextual_word_sets(&*backend.inner, &category.inner, seed)
            .map_err(to_py_err)?,
        other => {
            return Err(PyValueError::new_err(format!(
                "mode must be static or contextual, got `{other}`"
            )))
        }
    };
    let mut result = biasprobe::weat_test(&x, &y, &a, &b, &config, seed, &category.inner.name)
        .map_err(to_py_err)?;
    result.metadata.dropped_oov = prep.dropped_oov;
    result.metadata.balance_removed = prep.balance_removed;
    result.metadata.rebalanced = prep.rebalanced;
    result.metadata.notes = prep.notes;
    report_to_py(py, &result)
}

/// One-sided permutation p over size-preserving re-splits; returns
/// (p_value, exact, n_used) for the difference-of-means statistic.
#[pyfunction]
#[pyo3(signature = (group_a, group_b, permutations=10_000, exact_threshold=200_000, seed=42))]
fn permutation_pvalue(
    group_a: Vec<f64>,
    group_b: Vec<f64>,
    permutations: u64,
    exact_threshold: u64,
    seed: u64,
) -> PyResult<(f64, bool, u64)> {
    let config = permutation_config(permutations, exact_threshold, seed);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let out = biasprobe::permutation_pvalue(&group_a, &group_b, |a, b| mean(a) - mean(b), &config)
        .map_err(to_py_err)?;
    Ok((out.p_value, out.exact, out.n_used))
}

/// Spearman rank correlation with average ranks for ties; returns
/// (rho, two_sided_p).
#[pyfunction]
fn spearman(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64)> {
    biasprobe::spearman(&x, &y).map_err(to_py_err)
}

/// Multiplicative-update factorization of a nonnegative docs x terms
/// matrix.
#[pyclass(frozen)]
struct TopicModel {
    inner: biasprobe::TopicModel,
    error_trace: Vec<f64>,
}

#[pymethods]
impl TopicModel {
    #[getter]
    fn k(&self) -> usize {
        self.inner.k
    }

    #[getter]
    fn vocabulary(&self) -> Vec<String> {
        self.inner.vocabulary.clone()
    }

    fn document_weights(&self) -> Vec<Vec<f64>> {
        self.inner.w.clone()
    }

    fn topic_weights(&self) -> Vec<Vec<f64>> {
        self.inner.h.clone()
    }

    fn error_trace(&self) -> Vec<f64> {
        self.error_trace.clone()
    }

    fn top_terms(&self, topic: usize, n: usize) -> PyResult<Vec<(String, f64)>> {
        biasprobe::top_terms(&self.inner, topic, n).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "TopicModel(k={}, docs={}, terms={})",
            self.inner.k,
            self.inner.w.len(),
            self.inner.vocabulary.len()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (matrix, vocabulary, k, max_iterations=200, tolerance=1e-9, seed=42))]
fn nmf(
    matrix: Vec<Vec<f64>>,
    vocabulary: Vec<String>,
    k: usize,
    max_iterations: usize,
    tolerance: f64,
    seed: u64,
) -> PyResult<TopicModel> {
    let out = biasprobe::nmf(&matrix, &vocabulary, k, max_iterations, tolerance, seed)
        .map_err(to_py_err)?;
    Ok(TopicModel {
        inner: out.model,
        error_trace: out.error_trace,
    })
}

/// he-vs-she bias over an attribute list; `template` is "is" or
/// "can-do". Returns the full report as a dict.
#[pyfunction]
#[pyo3(signature = (backend, attributes, template="is"))]
fn employment<'py>(
    py: Python<'py>,
    backend: &Backend,
    attributes: Vec<String>,
    template: &str,
) -> PyResult<Bound<'py, PyAny>> {
    let kind = match template {
        "is" => EmploymentTemplate::Is,
        "can-do" => EmploymentTemplate::CanDo,
        other => {
            return Err(PyValueError::new_err(format!(
                "template must be `is` or `can-do`, got `{other}`"
            )))
        }
    };
    let report = employment_audit(&*backend.inner, &attributes, kind).map_err(to_py_err)?;
    report_to_py(py, &report)
}

#[pymodule]
fn _biasprobe(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Backend>()?;
    m.add_class::<Category>()?;
    m.add_class::<TopicModel>()?;
    m.add_function(wrap_pyfunction!(increased_log_probability, m)?)?;
    m.add_function(wrap_pyfunction!(log_prob_bias_score, m)?)?;
    m.add_function(wrap_pyfunction!(run_category_test, m)?)?;
    m.add_function(wrap_pyfunction!(weat_test, m)?)?;
    m.add_function(wrap_pyfunction!(permutation_pvalue, m)?)?;
    m.add_function(wrap_pyfunction!(spearman, m)?)?;
    m.add_function(wrap_pyfunction!(nmf, m)?)?;
    m.add_function(wrap_pyfunction!(employment, m)?)?;
    Ok(())
}
