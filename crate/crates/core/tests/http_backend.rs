//! Wire-protocol checks for the HTTP backend against an in-process stub
//! server speaking the five routes.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use biasprobe::error::BiasError;
use biasprobe::stimuli::{NumberAgreement, TargetWord, Template};
use biasprobe::{CachedBackend, HttpBackend, ModelBackend, PermutationConfig};

const VOCAB: [&str; 7] = ["he", "she", "it", "is", "a", "programmer", "homemaker"];

fn distribution(he: f64, she: f64) -> serde_json::Value {
    serde_json::json!({"he": he, "she": she, "it": 1.0 - he - she})
}

fn table(text: &str, position: usize) -> Option<serde_json::Value> {
    match (text, position) {
        ("[MASK] is a programmer", 0) => Some(distribution(0.2, 0.05)),
        ("[MASK] is a homemaker", 0) => Some(distribution(0.05, 0.2)),
        ("[MASK] is a [MASK]", 0) => Some(distribution(0.1, 0.1)),
        ("[MASK] is a [MASK]", 3) => {
            Some(serde_json::json!({"programmer": 0.5, "homemaker": 0.5}))
        }
        _ => None,
    }
}

fn handle(stream: &mut TcpStream, hits: &Arc<std::sync::atomic::AtomicUsize>) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() || request_line.is_empty() {
        return;
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("/").to_string();
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() || line.trim().is_empty() {
            break;
        }
        if let Some(rest) = line.to_ascii_lowercase().strip_prefix("content-length:") {
            content_length = rest.trim().parse().unwrap_or(0);
        }
    }
    let mut body = vec![0u8; content_length];
    if content_length > 0 {
        reader.read_exact(&mut body).unwrap();
    }
    let payload: serde_json::Value =
        serde_json::from_slice(&body).unwrap_or(serde_json::Value::Null);

    let (status, response) = match path.as_str() {
        "/descriptor" => (
            200,
            serde_json::json!({
                "name": "stub",
                "mask_token": "[MASK]",
                "vocabulary_size": VOCAB.len(),
                "embedding_dimension": 3
            }),
        ),
        "/encode" => {
            let text = payload["text"].as_str().unwrap_or("");
            let mut tokens = Vec::new();
            let mut cursor = 0usize;
            for word in text.split(' ').filter(|w| !w.is_empty()) {
                let start = text[cursor..].find(word).unwrap() + cursor;
                tokens.push(serde_json::json!({
                    "token": word, "start": start, "end": start + word.len()
                }));
                cursor = start + word.len();
            }
            (200, serde_json::json!({ "tokens": tokens }))
        }
        "/contains" => {
            let token = payload["token"].as_str().unwrap_or("");
            (200, serde_json::json!({ "contains": VOCAB.contains(&token) }))
        }
        "/predict_mask" => {
            hits.fetch_add(1, Ordering::SeqCst);
            let tokens: Vec<String> = payload["tokens"]
                .as_array()
                .unwrap()
                .iter()
                .map(|t| t.as_str().unwrap().to_string())
                .collect();
            let text = tokens.join(" ");
            let mut distributions = serde_json::Map::new();
            let mut ok = true;
            for pos in payload["mask_positions"].as_array().unwrap() {
                let pos = pos.as_u64().unwrap() as usize;
                match table(&text, pos) {
                    Some(row) => {
                        distributions.insert(pos.to_string(), row);
                    }
                    None => ok = false,
                }
            }
            if ok {
                (200, serde_json::json!({ "distributions": distributions }))
            } else {
                (500, serde_json::json!({"error": format!("no row for {text}")}))
            }
        }
        "/embeddings" => {
            let n = payload["tokens"].as_array().unwrap().len();
            let vectors: Vec<Vec<f64>> = (0..n)
                .map(|i| vec![i as f64, 1.0, 0.5])
                .collect();
            (200, serde_json::json!({ "vectors": vectors }))
        }
        _ => (404, serde_json::json!({"error": "unknown route"})),
    };
    let body = response.to_string();
    let raw = format!(
        "HTTP/1.1 {status} OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.write_all(raw.as_bytes());
}

/// Serves until dropped; returns (base url, predict-call counter, stop flag).
fn spawn_stub() -> (String, Arc<std::sync::atomic::AtomicUsize>, Arc<AtomicBool>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let hits = Arc::new(std::sync::atomic::AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let thread_hits = hits.clone();
    let thread_stop = stop.clone();
    listener.set_nonblocking(true).unwrap();
    std::thread::spawn(move || {
        while !thread_stop.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).unwrap();
                    handle(&mut stream, &thread_hits);
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(std::time::Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });
    (format!("http://{addr}"), hits, stop)
}

#[test]
fn full_probe_path_over_the_wire() {
    let (url, hits, stop) = spawn_stub();
    let backend = CachedBackend::new(HttpBackend::connect(&url).unwrap());
    let descriptor = backend.descriptor();
    assert_eq!(descriptor.name, "stub");
    assert_eq!(descriptor.vocabulary_size, 7);
    assert_eq!(backend.mask_token(), "[MASK]");

    assert!(backend.vocab_contains("programmer").unwrap());
    assert!(!backend.vocab_contains("plumber").unwrap());

    let category: biasprobe::WeatCategory = serde_json::from_value(serde_json::json!({
        "name": "wire",
        "templates": [{"id": "t1", "text": "[TARGET] is a [ATTRIBUTE]", "number": "singular"}],
        "targets": {
            "X": {"label": "m", "words": [{"token": "he", "number": "singular"}]},
            "Y": {"label": "f", "words": [{"token": "she", "number": "singular"}]}
        },
        "attributes": {
            "A": {"label": "work", "words": ["programmer"]},
            "B": {"label": "home", "words": ["homemaker"]}
        }
    }))
    .unwrap();
    let run =
        biasprobe::run_category_test(&backend, &category, &PermutationConfig::default(), 3).unwrap();
    // programmer: he ln(0.2/0.1) - she ln(0.05/0.1) = 2 ln 2; homemaker mirrored.
    let expected = 2.0 * 2.0f64.ln();
    assert!((run.result.per_attribute_bias["programmer"] - expected).abs() < 1e-12);
    assert!((run.result.per_attribute_bias["homemaker"] + expected).abs() < 1e-12);
    assert!((run.result.statistic - 2.0 * expected).abs() < 1e-12);

    // Three unique sentences; parallel attribute workers may race the
    // warm-up, but a rerun over the warm cache adds no server calls.
    let after_first = hits.load(Ordering::SeqCst);
    assert!((3..=6).contains(&after_first), "calls: {after_first}");
    let rerun =
        biasprobe::run_category_test(&backend, &category, &PermutationConfig::default(), 3).unwrap();
    assert_eq!(rerun.result.statistic, run.result.statistic);
    assert_eq!(hits.load(Ordering::SeqCst), after_first);

    // Embeddings come back positionally.
    let template = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
    let embedding = biasprobe::extract_masked_embedding(
        &backend,
        &template,
        biasprobe::SlotRole::Attribute,
        "programmer",
    )
    .unwrap();
    assert_eq!(embedding.values, vec![3.0, 1.0, 0.5]);

    stop.store(true, Ordering::SeqCst);
}

#[test]
fn server_error_and_dead_port_are_transport_errors() {
    let (url, _, stop) = spawn_stub();
    let backend = HttpBackend::connect(&url).unwrap();
    // A sentence the stub has no row for: 500 -> transport error.
    let template = Template::new("t1", "[TARGET] is a [ATTRIBUTE]", NumberAgreement::Singular).unwrap();
    let he = TargetWord::new("he", NumberAgreement::Singular);
    let err = biasprobe::increased_log_probability(&backend, &template, &he, "it").unwrap_err();
    assert!(matches!(err, BiasError::Transport(_)), "got {err:?}");
    stop.store(true, Ordering::SeqCst);

    let dead = HttpBackend::connect("http://127.0.0.1:9");
    assert!(matches!(dead, Err(BiasError::Transport(_))));
}

#[test]
fn predict_mask_round_trips_distributions() {
    let (url, _, stop) = spawn_stub();
    let backend = HttpBackend::connect(&url).unwrap();
    let query = biasprobe::MaskedQuery {
        tokens: vec!["[MASK]".into(), "is".into(), "a".into(), "[MASK]".into()],
        mask_slots: vec![
            (0, biasprobe::SlotRole::Target),
            (3, biasprobe::SlotRole::Attribute),
        ],
        filled_slots: vec![],
        template_id: "t1".into(),
    };
    let dists = backend.predict_mask(&query).unwrap();
    assert_eq!(dists.len(), 2);
    assert_eq!(dists[&0].probabilities["he"], 0.1);
    assert_eq!(dists[&3].probabilities["programmer"], 0.5);
    let expected: BTreeMap<String, f64> = [("he", 0.1), ("she", 0.1), ("it", 0.8)]
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    assert_eq!(dists[&0].probabilities, expected);
    stop.store(true, Ordering::SeqCst);
}
