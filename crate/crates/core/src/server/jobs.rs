//! Background desensitization queue.
//!
//! At most one run per group is in flight. Scheduling a group that is already
//! running marks it dirty so it runs once more afterwards; scheduling a group
//! that is already queued is a no-op.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use tokio::sync::{mpsc, Notify};

use crate::harvester::GroupKey;

type JobFn = Arc<dyn Fn(GroupKey) + Send + Sync>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Queued,
    Running,
    RunningDirty,
}

struct Inner {
    slots: Mutex<HashMap<GroupKey, Slot>>,
    tx: mpsc::UnboundedSender<GroupKey>,
    outstanding: AtomicUsize,
    idle: Notify,
    completed: AtomicUsize,
}

#[derive(Clone)]
pub struct JobQueue {
    inner: Arc<Inner>,
}

impl JobQueue {
    /// Start `workers` worker tasks on the current tokio runtime.
    pub fn start(workers: usize, job: impl Fn(GroupKey) + Send + Sync + 'static) -> Self {
        let (tx, rx) = mpsc::unbounded_channel();
        let inner = Arc::new(Inner {
            slots: Mutex::new(HashMap::new()),
            tx,
            outstanding: AtomicUsize::new(0),
            idle: Notify::new(),
            completed: AtomicUsize::new(0),
        });
        let rx = Arc::new(tokio::sync::Mutex::new(rx));
        let job: JobFn = Arc::new(job);
        for _ in 0..workers.max(1) {
            let inner = inner.clone();
            let rx = rx.clone();
            let job = job.clone();
            tokio::spawn(async move {
                loop {
                    let next = rx.lock().await.recv().await;
                    let Some(key) = next else { break };
                    Self::run_one(&inner, &job, key).await;
                }
            });
        }
        JobQueue { inner }
    }

    fn slots(inner: &Inner) -> std::sync::MutexGuard<'_, HashMap<GroupKey, Slot>> {
        inner.slots.lock().unwrap_or_else(|e| e.into_inner())
    }

    async fn run_one(inner: &Arc<Inner>, job: &JobFn, key: GroupKey) {
        Self::slots(inner).insert(key.clone(), Slot::Running);
        let j = job.clone();
        let k = key.clone();
        if let Err(e) = tokio::task::spawn_blocking(move || j(k)).await {
            tracing::error!(?key, "desensitization job panicked: {e}");
        }
        inner.completed.fetch_add(1, Ordering::SeqCst);
        let mut slots = Self::slots(inner);
        if slots.get(&key) == Some(&Slot::RunningDirty) {
            slots.insert(key.clone(), Slot::Queued);
            drop(slots);
            let _ = inner.tx.send(key);
        } else {
            slots.remove(&key);
            drop(slots);
            if inner.outstanding.fetch_sub(1, Ordering::SeqCst) == 1 {
                inner.idle.notify_waiters();
            }
        }
    }

    pub fn schedule(&self, key: GroupKey) {
        let mut slots = Self::slots(&self.inner);
        match slots.get(&key).copied() {
            None => {
                slots.insert(key.clone(), Slot::Queued);
                self.inner.outstanding.fetch_add(1, Ordering::SeqCst);
                drop(slots);
                let _ = self.inner.tx.send(key);
            }
            Some(Slot::Running) => {
                slots.insert(key, Slot::RunningDirty);
            }
            Some(Slot::Queued) | Some(Slot::RunningDirty) => {}
        }
    }

    pub fn outstanding(&self) -> usize {
        self.inner.outstanding.load(Ordering::SeqCst)
    }

    /// Number of job executions finished so far.
    pub fn completed(&self) -> usize {
        self.inner.completed.load(Ordering::SeqCst)
    }

    /// Resolve once no job is queued or running.
    pub async fn wait_idle(&self) {
        loop {
            let notified = self.inner.idle.notified();
            tokio::pin!(notified);
            notified.as_mut().enable();
            if self.outstanding() == 0 {
                return;
            }
            notified.await;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FormFactorClass;
    use std::time::Duration;

    fn key(n: u32) -> GroupKey {
        GroupKey {
            url: format!("http://a{n}.com/"),
            class: FormFactorClass::Phone,
            width: 1,
            height: 1,
        }
    }

    #[tokio::test]
    async fn coalesces_and_reruns_dirty_groups() {
        let runs = Arc::new(Mutex::new(Vec::new()));
        let gate = Arc::new(std::sync::Barrier::new(2));
        let (r, g) = (runs.clone(), gate.clone());
        let q = JobQueue::start(2, move |k| {
            if k == key(0) && r.lock().unwrap().is_empty() {
                g.wait();
                std::thread::sleep(Duration::from_millis(50));
            }
            r.lock().unwrap().push(k);
        });
        q.schedule(key(0));
        // wait until the first run is underway, then schedule twice more
        tokio::task::spawn_blocking(move || gate.wait()).await.unwrap();
        q.schedule(key(0));
        q.schedule(key(0));
        q.wait_idle().await;
        assert_eq!(runs.lock().unwrap().as_slice(), &[key(0), key(0)]);
        assert_eq!(q.outstanding(), 0);
    }

    #[tokio::test]
    async fn idle_when_nothing_scheduled() {
        let q = JobQueue::start(1, |_| {});
        tokio::time::timeout(Duration::from_secs(1), q.wait_idle()).await.unwrap();
        for i in 0..10 {
            q.schedule(key(i));
        }
        q.wait_idle().await;
        assert_eq!(q.completed(), 10);
    }
}
