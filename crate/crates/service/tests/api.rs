use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use sr_client::{ClientError, Exchange, RatingClient};
use sr_core::image::synth::textured;
use sr_service::{ItemConfig, Label, SetConfig, StudyConfig};

/// Writes a 5×7 study and returns it with a map from served PNG bytes to label.
fn study(dir: &Path, static_dir: Option<&Path>) -> (StudyConfig, HashMap<Vec<u8>, Label>) {
    let mut truth = HashMap::new();
    let sets = (0..5)
        .map(|s| SetConfig {
            items: Label::ALL
                .iter()
                .enumerate()
                .map(|(k, &method)| {
                    let img = textured(12, 12, 100 + (s * 7 + k) as u64);
                    let path = dir.join(format!("img_{s}_{k}.png"));
                    sr_core::image::save(&path, &img).unwrap();
                    truth.insert(sr_core::image::encode_png(&img).unwrap(), method);
                    ItemConfig { method, path }
                })
                .collect(),
        })
        .collect();
    let cfg = StudyConfig { shuffle_seed: 5, ratings_log: dir.join("ratings.csv"), static_dir: static_dir.map(Path::to_path_buf), sets };
    (cfg, truth)
}

async fn spawn(cfg: &StudyConfig) -> SocketAddr {
    let (listener, addr, app) = sr_service::bind(cfg, "127.0.0.1:0").await.unwrap();
    tokio::spawn(sr_service::serve(listener, app));
    addr
}

fn leaks_label(ex: &Exchange) -> Option<String> {
    let body = String::from_utf8_lossy(&ex.body).to_lowercase();
    let path = ex.path.to_lowercase();
    let has_token = |s: &str, name: &str| s.split(|c: char| !c.is_ascii_alphanumeric()).any(|t| t == name);
    // Two-letter labels are only meaningful as whole tokens of text bodies.
    let binary = ex.body.starts_with(b"\x89PNG");
    Label::ALL.iter().map(|l| l.as_str()).find_map(|name| {
        let long = name.len() > 2 && body.contains(name);
        let in_body = long || (!binary && has_token(&body, name));
        (in_body || has_token(&path, name)).then(|| format!("{name} in {} {}", ex.method, ex.path))
    })
}

#[tokio::test]
async fn scripted_session_is_blind_and_reports_exact_means() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, truth) = study(dir.path(), None);
    let addr = spawn(&cfg).await;
    let seen: Arc<Mutex<Vec<Exchange>>> = Arc::default();
    let sink = seen.clone();
    let client = RatingClient::new(format!("http://{addr}")).observe(move |ex| sink.lock().unwrap().push(ex.clone()));

    let session = client.session(None).await.unwrap();
    assert_eq!(session.sets.len(), 5);
    assert_eq!(session.items().count(), 35);
    assert!(session.items().all(|it| it.score.is_none()));
    assert!(matches!(client.report(&session.session_id).await, Err(ClientError::Incomplete(_))));

    let mut scores: HashMap<Label, Vec<u8>> = HashMap::new();
    let items: Vec<_> = session.items().cloned().collect();
    for (n, item) in items.iter().enumerate() {
        let png = client.image(item).await.unwrap();
        let label = truth[&png];
        // A deterministic rater that prefers some methods.
        let score = (1 + (label as usize + n) % 5) as u8;
        client.rate(&session.session_id, &item.item_id, score as i64).await.unwrap();
        scores.entry(label).or_default().push(score);
        if n == 17 {
            assert!(matches!(client.report(&session.session_id).await, Err(ClientError::Incomplete(_))));
            let resumed = client.session(Some(&session.session_id)).await.unwrap();
            assert_eq!(resumed.items().filter(|it| it.score.is_some()).count(), 18);
            assert_eq!(resumed.next_unrated().unwrap().item_id, items[18].item_id);
        }
    }

    {
        let seen = seen.lock().unwrap();
        assert!(seen.len() > 35 * 2);
        for ex in seen.iter() {
            assert_eq!(leaks_label(ex), None);
        }
    }

    let report = client.report(&session.session_id).await.unwrap();
    assert_eq!(report.methods.len(), 7);
    for row in &report.methods {
        let label: Label = row.method.parse().unwrap();
        let s = &scores[&label];
        assert_eq!(row.n, 5);
        assert_eq!(row.mos, s.iter().map(|&v| v as f64).sum::<f64>() / s.len() as f64);
    }
    let order: Vec<_> = report.methods.iter().map(|r| r.method.clone()).collect();
    assert_eq!(order, Label::ALL.iter().map(|l| l.to_string()).collect::<Vec<_>>());

    let logged = sr_service::read_log(&cfg.ratings_log).unwrap();
    assert_eq!(logged.records.len(), 35);
    assert!(logged.skipped.is_empty());
    let from_log = sr_service::mos_table(&logged.records);
    assert_eq!(
        from_log.iter().map(|m| (m.method.to_string(), m.mos, m.n)).collect::<Vec<_>>(),
        report.methods.iter().map(|m| (m.method.clone(), m.mos, m.n)).collect::<Vec<_>>()
    );
}

#[tokio::test]
async fn resubmission_overwrites_and_bad_requests_fail() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = study(dir.path(), None);
    let addr = spawn(&cfg).await;
    let client = RatingClient::new(format!("http://{addr}"));
    let s = client.session(None).await.unwrap();
    let other = client.session(None).await.unwrap();
    assert_ne!(s.session_id, other.session_id);

    let first = s.items().next().unwrap().item_id.clone();
    match client.rate(&s.session_id, &first, 7).await {
        Err(ClientError::Status { status, .. }) => assert_eq!(status.as_u16(), 400),
        r => panic!("score 7 accepted: {r:?}"),
    }
    match client.rate(&s.session_id, &other.items().next().unwrap().item_id, 3).await {
        Err(ClientError::Status { status, .. }) => assert_eq!(status.as_u16(), 404),
        r => panic!("foreign item accepted: {r:?}"),
    }
    match client.session(Some("0000")).await {
        Err(ClientError::Status { status, .. }) => assert_eq!(status.as_u16(), 404),
        r => panic!("unknown session: {r:?}"),
    }
    assert_eq!(client.get_raw("/images/ffff").await.unwrap().status.as_u16(), 404);
    assert_eq!(client.get_raw("/api/report").await.unwrap().status.as_u16(), 400);

    for item in s.items() {
        client.rate(&s.session_id, &item.item_id, 1).await.unwrap();
    }
    client.rate(&s.session_id, &first, 5).await.unwrap();
    let report = client.report(&s.session_id).await.unwrap();
    assert!(report.methods.iter().all(|r| r.n == 5));
    assert_eq!(report.methods.iter().map(|r| r.mos * r.n as f64).sum::<f64>(), 34.0 + 5.0);
    // The log keeps both submissions; the report counts the item once.
    let logged = sr_service::read_log(&cfg.ratings_log).unwrap();
    assert_eq!(logged.records.len(), 36);
    assert!(sr_service::mos_table(&logged.records).iter().all(|r| r.n == 5));
}

#[tokio::test]
async fn static_files_and_placeholder() {
    let dir = tempfile::tempdir().unwrap();
    let ui = dir.path().join("ui");
    std::fs::create_dir(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<title>rate</title>").unwrap();
    let (cfg, _) = study(dir.path(), Some(&ui));
    let client = RatingClient::new(format!("http://{}", spawn(&cfg).await));
    let root = client.get_raw("/").await.unwrap();
    assert_eq!(root.status.as_u16(), 200);
    assert_eq!(root.body, b"<title>rate</title>");
    assert_eq!(client.session(None).await.unwrap().items().count(), 35);

    let dir2 = tempfile::tempdir().unwrap();
    let (cfg, _) = study(dir2.path(), None);
    let client = RatingClient::new(format!("http://{}", spawn(&cfg).await));
    let root = client.get_raw("/").await.unwrap();
    assert_eq!(root.status.as_u16(), 200);
    assert_eq!(leaks_label(&root), None);
}

#[tokio::test]
async fn startup_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (mut cfg, _) = study(dir.path(), None);
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    assert!(matches!(sr_service::bind(&cfg, &addr).await, Err(sr_service::ServiceError::Bind { .. })));
    cfg.sets[0].items[0].path = dir.path().join("missing.png");
    assert!(matches!(sr_service::bind(&cfg, "127.0.0.1:0").await, Err(sr_service::ServiceError::Config(_))));
}
