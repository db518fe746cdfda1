use std::collections::HashMap;
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::log::{mos_by_method, LogRecord, MethodMos, RatingLog};
use crate::{Label, ServiceError, StudyConfig};

/// A study's images, decoded once and re-encoded as PNG.
#[derive(Debug)]
pub struct Study {
    pub shuffle_seed: u64,
    /// `sets[s][k]`: label and PNG bytes of the k-th configured item.
    sets: Vec<Vec<(Label, Arc<Vec<u8>>)>>,
}

impl Study {
    pub fn load(cfg: &StudyConfig) -> Result<Self, ServiceError> {
        cfg.validate()?;
        let mut sets = Vec::with_capacity(cfg.sets.len());
        for set in &cfg.sets {
            let mut items = Vec::with_capacity(set.items.len());
            for item in &set.items {
                let img = sr_core::image::load(&item.path).map_err(|e| ServiceError::Config(format!("{}: {e}", item.path.display())))?;
                let png = sr_core::image::encode_png(&img).map_err(|e| ServiceError::Config(e.to_string()))?;
                items.push((item.method, Arc::new(png)));
            }
            sets.push(items);
        }
        Ok(Study { shuffle_seed: cfg.shuffle_seed, sets })
    }

    pub fn set_count(&self) -> usize {
        self.sets.len()
    }

    pub fn item_count(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ItemView {
    pub item_id: String,
    pub image_url: String,
    /// Score already recorded for this item, so a reloaded page can resume.
    pub score: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SetView {
    pub set_id: usize,
    pub items: Vec<ItemView>,
}

/// What the rater sees. Contains no labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub sets: Vec<SetView>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub methods: Vec<MethodMos>,
}

#[derive(Debug)]
struct Slot {
    item_id: String,
    set: usize,
    source: usize,
}

#[derive(Debug)]
struct Session {
    id: String,
    /// Shuffled presentation order, set by set.
    slots: Vec<Slot>,
    ratings: HashMap<String, u8>,
}

/// All sessions of a running study plus the ratings log.
#[derive(Debug)]
pub struct Registry {
    study: Study,
    sessions: Vec<Session>,
    by_session: HashMap<String, usize>,
    /// item id → (session index, slot index)
    by_item: HashMap<String, (usize, usize)>,
    log: RatingLog,
}

fn short_hash(parts: &[&[u8]]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    hex::encode(&h.finalize()[..8])
}

impl Registry {
    pub fn new(study: Study, log: RatingLog) -> Self {
        Registry { study, sessions: Vec::new(), by_session: HashMap::new(), by_item: HashMap::new(), log }
    }

    pub fn study(&self) -> &Study {
        &self.study
    }

    /// Starts a session. Ids and item order depend only on the shuffle seed
    /// and how many sessions came before.
    pub fn create_session(&mut self) -> SessionView {
        let index = self.sessions.len();
        let seed = self.study.shuffle_seed;
        let id = short_hash(&[b"session", &seed.to_le_bytes(), &(index as u64).to_le_bytes()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (index as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        let mut slots = Vec::with_capacity(self.study.item_count());
        for (s, items) in self.study.sets.iter().enumerate() {
            let mut order: Vec<usize> = (0..items.len()).collect();
            order.shuffle(&mut rng);
            for (pos, source) in order.into_iter().enumerate() {
                let item_id = short_hash(&[b"item", id.as_bytes(), &(s as u64).to_le_bytes(), &(pos as u64).to_le_bytes()]);
                self.by_item.insert(item_id.clone(), (index, slots.len()));
                slots.push(Slot { item_id, set: s, source });
            }
        }
        self.by_session.insert(id.clone(), index);
        self.sessions.push(Session { id, slots, ratings: HashMap::new() });
        self.view(index)
    }

    fn session_index(&self, session_id: &str) -> Result<usize, ServiceError> {
        self.by_session.get(session_id).copied().ok_or_else(|| ServiceError::UnknownSession(session_id.into()))
    }

    pub fn session(&self, session_id: &str) -> Result<SessionView, ServiceError> {
        Ok(self.view(self.session_index(session_id)?))
    }

    fn view(&self, index: usize) -> SessionView {
        let sess = &self.sessions[index];
        let mut sets: Vec<SetView> = (0..self.study.set_count()).map(|set_id| SetView { set_id, items: Vec::new() }).collect();
        for slot in &sess.slots {
            sets[slot.set].items.push(ItemView {
                item_id: slot.item_id.clone(),
                image_url: format!("/images/{}", slot.item_id),
                score: sess.ratings.get(&slot.item_id).copied(),
            });
        }
        SessionView { session_id: sess.id.clone(), sets }
    }

    pub fn image(&self, item_id: &str) -> Result<Arc<Vec<u8>>, ServiceError> {
        let &(s, k) = self.by_item.get(item_id).ok_or_else(|| ServiceError::UnknownItem(item_id.into()))?;
        let slot = &self.sessions[s].slots[k];
        Ok(self.study.sets[slot.set][slot.source].1.clone())
    }

    /// Records a score, logging it before the in-memory state changes.
    pub fn rate(&mut self, session_id: &str, item_id: &str, score: i64) -> Result<(), ServiceError> {
        if !(1..=5).contains(&score) {
            return Err(ServiceError::InvalidScore(score));
        }
        let index = self.session_index(session_id)?;
        let &(s, k) = self.by_item.get(item_id).filter(|(s, _)| *s == index).ok_or_else(|| ServiceError::UnknownItem(item_id.into()))?;
        let slot = &self.sessions[s].slots[k];
        let method = self.study.sets[slot.set][slot.source].0;
        let timestamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0);
        let rec = LogRecord { timestamp, session_id: session_id.to_string(), item_id: item_id.to_string(), method, score: score as u8 };
        self.log.append(&rec)?;
        self.sessions[s].ratings.insert(item_id.to_string(), score as u8);
        Ok(())
    }

    /// `(rated, total)` for a session.
    pub fn progress(&self, session_id: &str) -> Result<(usize, usize), ServiceError> {
        let sess = &self.sessions[self.session_index(session_id)?];
        Ok((sess.ratings.len(), sess.slots.len()))
    }

    /// Per-method MOS, available only once every item has a score.
    pub fn report(&self, session_id: &str) -> Result<Report, ServiceError> {
        let sess = &self.sessions[self.session_index(session_id)?];
        if sess.ratings.len() < sess.slots.len() {
            return Err(ServiceError::Incomplete { rated: sess.ratings.len(), total: sess.slots.len() });
        }
        let scores = sess.slots.iter().map(|slot| (self.study.sets[slot.set][slot.source].0, sess.ratings[&slot.item_id]));
        Ok(Report { methods: mos_by_method(scores) })
    }
}
