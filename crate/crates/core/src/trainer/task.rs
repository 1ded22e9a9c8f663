//! Synthetic data streams.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{TaskKind, TrainConfig};
use super::model::Model;
use crate::error::{Error, Result};
use crate::ffn::{splitmix64, Activation, LayerMasks};
use crate::matrix::{Layout, Matrix};

/// Scale of the teacher's weights relative to the student's init.
const TEACHER_GAIN: f64 = 1.0;
/// Distance scale of the class means.
const CLASS_SEPARATION: f64 = 0.5;
/// Streams holding at most this many values (inputs plus targets) keep
/// every batch they generate.
const CACHE_LIMIT: usize = 1 << 24;

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Regression(Matrix),
    Labels(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: Matrix,
    pub targets: Targets,
}

#[derive(Debug, Clone)]
enum Source {
    Teacher(Model),
    Mixture { means: Matrix, classes: usize },
}

/// A deterministic mini-batch stream.
#[derive(Debug, Clone)]
pub struct Task {
    kind: TaskKind,
    d: usize,
    source: Source,
    rng: ChaCha8Rng,
    drawn: usize,
}

/// Builds the task for `kind` with dimensions of the student. The same seed
/// gives the same teacher or mixture and the same batch sequence.
pub fn make_task(
    kind: TaskKind,
    activation: Activation,
    d: usize,
    d_ff: usize,
    depth: usize,
    classes: usize,
    seed: u64,
) -> Result<Task> {
    let mut init = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x7ea_c4e5));
    let source = match kind {
        TaskKind::TeacherStudentRegression => {
            let mut teacher = Model::random(activation, d, d_ff, depth, &mut init)?;
            for layer in &mut teacher.layers {
                layer.w_in = layer.w_in.scale(TEACHER_GAIN);
                layer.w_out = layer.w_out.scale(TEACHER_GAIN);
                for b in &mut layer.b_in {
                    *b = 0.5 * (init.random::<f64>() - 0.5);
                }
            }
            Source::Teacher(teacher)
        }
        TaskKind::SyntheticClassification => Source::Mixture {
            means: Matrix::random_normal(classes, d, Layout::RowMajor, CLASS_SEPARATION, &mut init),
            classes,
        },
    };
    Ok(Task {
        kind,
        d,
        source,
        rng: ChaCha8Rng::seed_from_u64(seed),
        drawn: 0,
    })
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    /// Same teacher or mixture, independent sample stream.
    pub fn fork(&self, stream_seed: u64) -> Task {
        Task {
            rng: ChaCha8Rng::seed_from_u64(stream_seed),
            drawn: 0,
            ..self.clone()
        }
    }

    /// The next `n` samples.
    pub fn next_batch(&mut self, n: usize) -> Result<Batch> {
        let batch = match &self.source {
            Source::Teacher(teacher) => {
                let x = Matrix::random_normal(n, self.d, Layout::RowMajor, 1.0, &mut self.rng);
                let masks = alloc::vec![LayerMasks::dense(); teacher.layers.len()];
                let (y, _) = teacher.forward(&x, &masks)?;
                Batch {
                    x,
                    targets: Targets::Regression(y),
                }
            }
            Source::Mixture { means, classes } => {
                // Labels cycle through the classes, so every window of
                // `classes` consecutive samples is exactly balanced.
                let labels: Vec<usize> = (0..n).map(|i| (self.drawn + i) % classes).collect();
                let noise: Matrix = Matrix::random_normal(n, self.d, Layout::RowMajor, 1.0, &mut self.rng);
                let x = Matrix::from_fn(n, self.d, Layout::RowMajor, |i, j| {
                    means.get(labels[i], j) + noise.get(i, j)
                });
                Batch {
                    x,
                    targets: Targets::Labels(labels),
                }
            }
        };
        self.drawn += n;
        Ok(batch)
    }
}

/// The training batches of one task, seed and batch size, addressable by
/// step.
///
/// Reading an earlier step replays the stream. Small streams keep their
/// batches, so runs sharing one skip regenerating them; larger streams
/// regenerate from the start instead.
#[derive(Debug, Clone)]
pub struct BatchStream {
    key: (TaskKind, Activation, usize, usize, usize, usize, u64, usize),
    origin: Task,
    task: Task,
    drawn: usize,
    cache: Option<Vec<Batch>>,
}

fn stream_key(cfg: &TrainConfig) -> (TaskKind, Activation, usize, usize, usize, usize, u64, usize) {
    (
        cfg.task,
        cfg.activation,
        cfg.d,
        cfg.d_ff,
        cfg.depth,
        cfg.classes,
        cfg.seed,
        cfg.batch,
    )
}

impl BatchStream {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        let task = make_task(
            cfg.task,
            cfg.activation,
            cfg.d,
            cfg.d_ff,
            cfg.depth,
            cfg.classes,
            cfg.seed,
        )?;
        let values = cfg.steps.saturating_mul(cfg.batch).saturating_mul(2 * cfg.d);
        Ok(Self {
            key: stream_key(cfg),
            origin: task.clone(),
            task,
            drawn: 0,
            cache: (values <= CACHE_LIMIT).then(Vec::new),
        })
    }

    /// Whether `cfg` trains on this stream.
    pub fn serves(&self, cfg: &TrainConfig) -> bool {
        self.key == stream_key(cfg)
    }

    pub(crate) fn check(&self, cfg: &TrainConfig) -> Result<()> {
        if self.serves(cfg) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(
                "batch stream was built for a different task, seed or batch size".into(),
            ))
        }
    }

    /// The task the stream draws from, before any draws.
    pub fn origin(&self) -> &Task {
        &self.origin
    }

    /// The batch for 0-based step `step`.
    pub fn batch(&mut self, step: usize) -> Result<Batch> {
        if let Some(b) = self.cache.as_ref().and_then(|c| c.get(step)) {
            return Ok(b.clone());
        }
        if step < self.drawn {
            self.task = self.origin.clone();
            self.drawn = 0;
        }
        let n = self.key.7;
        loop {
            let b = self.task.next_batch(n)?;
            self.drawn += 1;
            if let Some(c) = &mut self.cache {
                c.push(b.clone());
            }
            if self.drawn > step {
                return Ok(b);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task(kind: TaskKind, seed: u64) -> Task {
        make_task(kind, Activation::Geglu, 8, 16, 2, 4, seed).unwrap()
    }

    #[test]
    fn same_seed_same_first_batch() {
        for kind in [TaskKind::TeacherStudentRegression, TaskKind::SyntheticClassification] {
            let a = task(kind, 9).next_batch(8).unwrap();
            let b = task(kind, 9).next_batch(8).unwrap();
            assert!(a.x.bitwise_eq(&b.x));
            assert_eq!(a.targets, b.targets);
            let c = task(kind, 10).next_batch(8).unwrap();
            assert!(!a.x.bitwise_eq(&c.x));
        }
    }

    #[test]
    fn stream_replays_and_regenerates() {
        let cfg = TrainConfig {
            d: 8,
            d_ff: 16,
            batch: 4,
            steps: 10,
            ..TrainConfig::default()
        };
        let mut direct = make_task(cfg.task, cfg.activation, 8, 16, cfg.depth, cfg.classes, cfg.seed).unwrap();
        let expected: Vec<Batch> = (0..5).map(|_| direct.next_batch(4).unwrap()).collect();
        let mut cached = BatchStream::new(&cfg).unwrap();
        let mut uncached = BatchStream::new(&cfg).unwrap();
        uncached.cache = None;
        for stream in [&mut cached, &mut uncached] {
            for step in [0, 1, 4, 2, 2, 3] {
                let b = stream.batch(step).unwrap();
                assert!(b.x.bitwise_eq(&expected[step].x));
                assert_eq!(b.targets, expected[step].targets);
            }
        }
        assert!(cached.serves(&cfg));
        assert!(!cached.serves(&TrainConfig { seed: 1, ..cfg }));
    }

    #[test]
    fn classes_balanced() {
        let mut t = task(TaskKind::SyntheticClassification, 1);
        let mut counts = [0usize; 4];
        for _ in 0..100 {
            let b = t.next_batch(1000).unwrap();
            let Targets::Labels(l) = b.targets else { panic!() };
            for y in l {
                counts[y] += 1;
            }
        }
        for c in counts {
            assert!((c as f64 / 1e5 - 0.25).abs() < 0.01);
        }
    }
}
