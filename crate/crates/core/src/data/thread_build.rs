//! Reconstruct reply trees from a flat post list: group by thread, drop
//! what cannot be wired up (orphans cascade, extra roots go, cyclic
//! threads are rejected whole), and keep only threads with at least two
//! posts.

use std::collections::{HashMap, HashSet};

use crate::data::{Post, Thread};

#[derive(Debug, Default, Clone, Copy)]
pub struct BuildReport {
    pub threads: usize,
    pub discarded_small: usize,
    pub rejected_cycles: usize,
    pub orphans_dropped: usize,
    pub extra_roots_dropped: usize,
}

/// Group posts by thread id and wire each group into a [`Thread`].
/// Output is sorted by thread id, so the result is deterministic
/// regardless of input order.
pub fn build_threads(posts: Vec<Post>) -> (Vec<Thread>, BuildReport) {
    let mut groups: HashMap<String, Vec<Post>> = HashMap::new();
    for p in posts {
        groups.entry(p.thread_id.clone()).or_default().push(p);
    }
    let mut ids: Vec<String> = groups.keys().cloned().collect();
    ids.sort_unstable();

    let mut threads = Vec::new();
    let mut report = BuildReport::default();
    'thread: for tid in ids {
        let mut group = groups.remove(&tid).unwrap();
        group.sort_by(|a, b| (a.created_utc, &a.id).cmp(&(b.created_utc, &b.id)));

        // cycle check over the raw reply graph, before any dropping
        let parent_of: HashMap<&str, Option<&str>> = group
            .iter()
            .map(|p| (p.id.as_str(), p.parent_id.as_deref()))
            .collect();
        for start in parent_of.keys() {
            let mut cur = *start;
            let mut hops = 0;
            while let Some(Some(next)) = parent_of.get(cur) {
                cur = next;
                hops += 1;
                if hops > group.len() {
                    log::warn!("thread {tid}: reply cycle, rejecting whole thread");
                    report.rejected_cycles += 1;
                    continue 'thread;
                }
            }
        }

        // keep the first root and everything whose parent survived
        let mut kept_ids: HashSet<&str> = HashSet::new();
        let mut kept = Vec::with_capacity(group.len());
        let mut root_seen = false;
        for post in &group {
            match &post.parent_id {
                None => {
                    if root_seen {
                        report.extra_roots_dropped += 1;
                        log::warn!("thread {tid}: dropping extra root {}", post.id);
                    } else {
                        root_seen = true;
                        kept_ids.insert(post.id.as_str());
                        kept.push(post.clone());
                    }
                }
                Some(pid) => {
                    if kept_ids.contains(pid.as_str()) {
                        kept_ids.insert(post.id.as_str());
                        kept.push(post.clone());
                    } else {
                        report.orphans_dropped += 1;
                        log::warn!("thread {tid}: dropping orphan {}", post.id);
                    }
                }
            }
        }
        if kept.len() < 2 {
            report.discarded_small += 1;
            continue;
        }
        match Thread::new(tid.clone(), kept, None) {
            Ok(t) => {
                threads.push(t);
                report.threads += 1;
            }
            Err(e) => {
                // unreachable given the filtering above, but never fatal
                log::warn!("thread {tid}: {e}");
                report.discarded_small += 1;
            }
        }
    }
    log::info!(
        "built {} threads ({} too small, {} cyclic, {} orphans, {} extra roots dropped)",
        report.threads,
        report.discarded_small,
        report.rejected_cycles,
        report.orphans_dropped,
        report.extra_roots_dropped
    );
    (threads, report)
}

/// 1 iff the post ends the thread: nothing replies to it. For dialog
/// chains this is exactly the last sentence.
pub fn label_post(thread: &Thread, post_id: &str) -> crate::error::Result<u8> {
    let idx = thread
        .index_of(post_id)
        .ok_or_else(|| crate::error::Error::Data(format!(
            "post {post_id} not in thread {}",
            thread.thread_id
        )))?;
    Ok(thread.is_leaf(idx) as u8)
}
