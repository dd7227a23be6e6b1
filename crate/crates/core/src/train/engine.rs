use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{Checkpoint, Progress, RngState};
use super::config::TrainConfig;
use super::optim::Adam;
use crate::components::ComponentSequence;
use crate::data::{StyleLabel, TrainingSample};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::nn::{glyph_batch, Discriminator, Forward, Generator, GeneratorInput, NetworkConfig, ParamStore};
use crate::objective::{
    adversarial_terms, feature_l1, generator_adversarial_term, pixel_loss, scalar, style_cross_entropy,
    total_losses, LossParts, LossReport,
};

const GEN_PARAMS: &str = "g:";
const GEN_BUFFERS: &str = "gb:";
const DISC_PARAMS: &str = "d:";
const DISC_BUFFERS: &str = "db:";
const ADAM_G: &str = "adam_g";
const ADAM_D: &str = "adam_d";

/// Inference batch size used for validation and evaluation passes.
pub const EVAL_BATCH: usize = 8;

/// Where [`Trainer::train`] writes its artifacts.
#[derive(Clone, Debug)]
pub struct RunOutput {
    dir: PathBuf,
}

impl RunOutput {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(dir.join("checkpoints"))?;
        Ok(Self { dir })
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.dir.join("metrics.log")
    }

    pub fn epoch_checkpoint(&self, epoch: usize) -> PathBuf {
        self.dir.join("checkpoints").join(format!("epoch-{epoch:03}.ckpt"))
    }

    pub fn best_checkpoint(&self) -> PathBuf {
        self.dir.join("best.ckpt")
    }

    pub fn last_checkpoint(&self) -> PathBuf {
        self.dir.join("last.ckpt")
    }
}

/// Seeded order of sample indices for an epoch; depends only on `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, len: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut idx: Vec<usize> = (0..len).collect();
    idx.shuffle(&mut rng);
    idx
}

/// One metrics-log line: `step epoch d_loss g_adv pixel constancy category lr`.
pub fn metrics_line(step: u64, epoch: usize, r: &LossReport, lr: f64) -> String {
    format!(
        "{step} {epoch} {} {} {} {} {} {lr}",
        r.total_d,
        r.g_adv,
        r.pixel,
        r.constancy,
        r.category()
    )
}

/// Owns both networks, their optimizers and the schedule position.
pub struct Trainer {
    cfg: TrainConfig,
    generator: Generator,
    discriminator: Discriminator,
    opt_g: Adam,
    opt_d: Adam,
    rng: ChaCha8Rng,
    progress: Progress,
}

struct Batch<'a> {
    source: Tensor,
    target: Tensor,
    styles: Vec<StyleLabel>,
    components: Vec<&'a ComponentSequence>,
}

impl<'a> Batch<'a> {
    fn new(samples: &[&'a TrainingSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        Ok(Self {
            source: glyph_batch(samples.iter().map(|s| &s.source))?,
            target: glyph_batch(samples.iter().map(|s| &s.target))?,
            styles: samples.iter().map(|s| s.style).collect(),
            components: samples.iter().map(|s| &s.components).collect(),
        })
    }

    fn input(&self) -> GeneratorInput<'_> {
        GeneratorInput {
            source: self.source.clone(),
            styles: &self.styles,
            components: &self.components,
        }
    }
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let net = cfg.network();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generator = Generator::new(&net, &mut rng)?;
        let discriminator = Discriminator::new(&net, &mut rng)?;
        Ok(Self {
            opt_g: Adam::new(cfg.beta1, cfg.beta2),
            opt_d: Adam::new(cfg.beta1, cfg.beta2),
            cfg,
            generator,
            discriminator,
            rng,
            progress: Progress {
                epoch: 1,
                batch_index: 0,
                step: 0,
            },
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn generator(&self) -> &Generator {
        &self.generator
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn progress(&self) -> Progress {
        self.progress
    }

    /// Generator and discriminator optimizer invocations so far.
    pub fn update_counts(&self) -> (u64, u64) {
        (self.opt_g.steps(), self.opt_d.steps())
    }

    /// One discriminator update followed by `g_steps_per_d_step` generator
    /// updates on the same batch. Returns the losses of the last update.
    pub fn train_step(&mut self, samples: &[&TrainingSample]) -> Result<LossReport> {
        let batch = Batch::new(samples)?;
        let mut parts = LossParts::default();
        self.d_update(&batch, &mut parts)?;
        for _ in 0..self.cfg.g_steps_per_d_step {
            self.g_update(&batch, &mut parts)?;
        }
        let report = total_losses(&parts, &self.cfg.weights());
        if !report.is_finite() {
            return Err(Error::Divergence {
                step: self.progress.step,
                parts: format!("{report:?}"),
            });
        }
        self.progress.step += 1;
        Ok(report)
    }

    /// A single discriminator update; fills `d_adv` and `category_real`.
    pub fn discriminator_update(&mut self, samples: &[&TrainingSample]) -> Result<LossParts> {
        let mut parts = LossParts::default();
        self.d_update(&Batch::new(samples)?, &mut parts)?;
        Ok(parts)
    }

    /// A single generator update; fills the generator-side loss parts.
    pub fn generator_update(&mut self, samples: &[&TrainingSample]) -> Result<LossParts> {
        let mut parts = LossParts::default();
        self.g_update(&Batch::new(samples)?, &mut parts)?;
        Ok(parts)
    }

    fn style_loss(&self) -> bool {
        self.cfg.style_mode != crate::nn::StyleMode::Disabled
    }

    /// Real pair (x, y) against fake pair (x, ŷ) with ŷ detached.
    fn d_update(&mut self, batch: &Batch, parts: &mut LossParts) -> Result<()> {
        let lr = self.cfg.lr_at(self.progress.epoch)?;
        let lambda_s = self.cfg.lambda_s;
        let fake = {
            let mut fwd = Forward::train(&mut self.rng);
            self.generator.forward(&batch.input(), &mut fwd)?.image.detach()
        };
        let mut fwd = Forward::train(&mut self.rng);
        let real_out = self.discriminator.forward(&batch.source, &batch.target, &mut fwd)?;
        let fake_out = self.discriminator.forward(&batch.source, &fake, &mut fwd)?;
        let (d_adv, _) = adversarial_terms(&real_out.realness, &fake_out.realness)?;
        let mut loss = d_adv.clone();
        if let (true, Some(logits)) = (self.style_loss(), &real_out.style_logits) {
            let ce = style_cross_entropy(logits, &batch.styles)?;
            parts.category_real = scalar(&ce)?;
            loss = (loss + (ce * lambda_s)?)?;
        }
        parts.d_adv = scalar(&d_adv)?;
        let grads = loss.backward()?;
        self.opt_d.step(self.discriminator.params(), &grads, lr)
    }

    fn g_update(&mut self, batch: &Batch, parts: &mut LossParts) -> Result<()> {
        let lr = self.cfg.lr_at(self.progress.epoch)?;
        let weights = self.cfg.weights();
        let style_loss = self.style_loss();
        let mut fwd = Forward::train(&mut self.rng);
        let out = self.generator.forward(&batch.input(), &mut fwd)?;
        let d_out = self.discriminator.forward(&batch.source, &out.image, &mut fwd)?;
        let g_adv = generator_adversarial_term(&d_out.realness)?;
        let pixel = pixel_loss(&batch.target, &out.image)?;
        // encoding ŷ must not disturb the encoder's running statistics
        let (fake_feature, _) = self
            .generator
            .encode_image(&out.image, &mut fwd.without_tracking())?;
        let constancy = feature_l1(&out.image_feature, &fake_feature)?;
        let mut loss = (&g_adv
            + (pixel.to_dtype(DType::F64)? * weights.lambda_p)?
            + (constancy.to_dtype(DType::F64)? * weights.lambda_c)?)?;
        parts.category_fake = 0.0;
        if let (true, Some(logits)) = (style_loss, &d_out.style_logits) {
            let ce = style_cross_entropy(logits, &batch.styles)?;
            parts.category_fake = scalar(&ce)?;
            loss = (loss + (ce * weights.lambda_s)?)?;
        }
        parts.g_adv = scalar(&g_adv)?;
        parts.pixel = scalar(&pixel)?;
        parts.constancy = scalar(&constancy)?;
        let grads = loss.backward()?;
        self.opt_g.step(self.generator.params(), &grads, lr)
    }

    /// Trains until the configured number of epochs, resuming from the current
    /// position. Appends one metrics line per step and writes a checkpoint
    /// after every epoch (plus `best.ckpt` when a validation set is given).
    pub fn train(
        &mut self,
        data: &[TrainingSample],
        out: Option<&RunOutput>,
        validation: Option<&[TrainingSample]>,
    ) -> Result<()> {
        self.train_for(data, out, validation, None).map(|_| ())
    }

    /// Like [`Trainer::train`], but stops once the global step count reaches
    /// `max_steps`, writing `last.ckpt` at that point. Returns whether the run
    /// completed all epochs.
    pub fn train_for(
        &mut self,
        data: &[TrainingSample],
        out: Option<&RunOutput>,
        validation: Option<&[TrainingSample]>,
        max_steps: Option<u64>,
    ) -> Result<bool> {
        if data.is_empty() {
            return Err(Error::Config("training set is empty".into()));
        }
        let mut log = match out {
            Some(o) => Some(BufWriter::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(o.metrics_path())?,
            )),
            None => None,
        };
        let mut best_ssim = f64::NEG_INFINITY;
        let batches = data.len().div_ceil(self.cfg.batch_size);
        while self.progress.epoch <= self.cfg.epochs {
            let epoch = self.progress.epoch;
            let order = epoch_order(self.cfg.seed, epoch, data.len());
            while self.progress.batch_index < batches {
                let b = self.progress.batch_index;
                let idx = &order[b * self.cfg.batch_size..((b + 1) * self.cfg.batch_size).min(data.len())];
                let batch: Vec<&TrainingSample> = idx.iter().map(|&i| &data[i]).collect();
                let report = self.train_step(&batch)?;
                self.progress.batch_index += 1;
                let line = metrics_line(self.progress.step, epoch, &report, self.cfg.lr_at(epoch)?);
                log::debug!("{line}");
                if let Some(w) = log.as_mut() {
                    writeln!(w, "{line}")?;
                    w.flush()?;
                }
                if max_steps.is_some_and(|m| self.progress.step >= m) {
                    if let Some(o) = out {
                        self.checkpoint().save(&o.last_checkpoint())?;
                    }
                    return Ok(false);
                }
            }
            self.recalibrate(data)?;
            self.progress.epoch += 1;
            self.progress.batch_index = 0;
            if let Some(o) = out {
                let ckpt = self.checkpoint();
                ckpt.save(&o.epoch_checkpoint(epoch))?;
                ckpt.save(&o.last_checkpoint())?;
                if let Some(val) = validation.filter(|v| !v.is_empty()) {
                    let report = evaluate(&self.generator, val, EVAL_BATCH)?;
                    log::info!("epoch {epoch}: validation SSIM {:.4}", report.overall.ssim);
                    if report.overall.ssim > best_ssim {
                        best_ssim = report.overall.ssim;
                        ckpt.save(&o.best_checkpoint())?;
                    }
                }
            }
            log::info!("finished epoch {epoch}/{}", self.cfg.epochs);
        }
        Ok(true)
    }

    /// Re-estimates the generator's batch-norm running statistics as the mean
    /// over `data` in training-sized batches, using the current weights.
    pub fn recalibrate(&mut self, data: &[TrainingSample]) -> Result<()> {
        for (k, chunk) in data.chunks(self.cfg.batch_size).enumerate() {
            let refs: Vec<&TrainingSample> = chunk.iter().collect();
            let batch = Batch::new(&refs)?;
            self.generator.forward(&batch.input(), &mut Forward::calibrate(k))?;
        }
        Ok(())
    }

    pub fn evaluate(&self, samples: &[TrainingSample]) -> Result<EvalReport> {
        evaluate(&self.generator, samples, EVAL_BATCH)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut tensors = std::collections::BTreeMap::new();
        let groups: [(&str, &ParamStore); 4] = [
            (GEN_PARAMS, self.generator.params()),
            (GEN_BUFFERS, self.generator.buffers()),
            (DISC_PARAMS, self.discriminator.params()),
            (DISC_BUFFERS, self.discriminator.buffers()),
        ];
        for (prefix, store) in groups {
            for (k, v) in store.snapshot() {
                tensors.insert(format!("{prefix}{k}"), v);
            }
        }
        tensors.extend(self.opt_g.state_tensors(ADAM_G));
        tensors.extend(self.opt_d.state_tensors(ADAM_D));
        Checkpoint {
            train_config: self.cfg.clone(),
            network: self.cfg.network(),
            progress: self.progress,
            rng: RngState::capture(&self.rng),
            g_updates: self.opt_g.steps(),
            d_updates: self.opt_d.steps(),
            tensors,
        }
    }

    /// Rebuilds a trainer exactly as it was when `ckpt` was taken. When
    /// `expected` is given its architecture must match the checkpoint's.
    pub fn from_checkpoint(ckpt: &Checkpoint, expected: Option<&TrainConfig>) -> Result<Self> {
        if let Some(exp) = expected {
            ckpt.require_network(&exp.network())?;
        }
        let mut cfg = ckpt.train_config.clone();
        if let Some(exp) = expected {
            // schedule-only settings (e.g. more epochs) may change on resume
            cfg.epochs = exp.epochs;
        }
        let mut trainer = Trainer::new(cfg)?;
        trainer.generator.params().load(&ckpt.group(GEN_PARAMS))?;
        trainer.generator.buffers().load(&ckpt.group(GEN_BUFFERS))?;
        trainer.discriminator.params().load(&ckpt.group(DISC_PARAMS))?;
        trainer.discriminator.buffers().load(&ckpt.group(DISC_BUFFERS))?;
        let (b1, b2) = (trainer.cfg.beta1, trainer.cfg.beta2);
        trainer.opt_g = Adam::restore(b1, b2, ckpt.g_updates, ADAM_G, &ckpt.tensors)?;
        trainer.opt_d = Adam::restore(b1, b2, ckpt.d_updates, ADAM_D, &ckpt.tensors)?;
        trainer.rng = ckpt.rng.restore()?;
        trainer.progress = ckpt.progress;
        Ok(trainer)
    }
}

/// Loads only the generator from a checkpoint, for inference.
pub fn load_generator(path: &Path, expected: Option<&NetworkConfig>) -> Result<Generator> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(exp) = expected {
        ckpt.require_network(exp)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let generator = Generator::new(&ckpt.network, &mut rng)?;
    generator.params().load(&ckpt.group(GEN_PARAMS))?;
    generator.buffers().load(&ckpt.group(GEN_BUFFERS))?;
    Ok(generator)
}

/// Reads a metrics log back as lines, for comparisons.
pub fn read_metrics(path: &Path) -> Result<Vec<String>> {
    use std::io::BufRead;
    Ok(std::io::BufReader::new(File::open(path)?)
        .lines()
        .collect::<std::io::Result<_>>()?)
}
