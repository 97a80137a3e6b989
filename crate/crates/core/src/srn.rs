//! Simple recurrent networks with modular connectivity.
//!
//! A network has one hidden layer made of named groups and one output layer
//! made of named groups. Hidden groups read from a source vector laid out as
//!
//! ```text
//! [ external input | context of each recurrent hidden group | accumulators ]
//! ```
//!
//! Contexts hold a copy of the group's previous activations. Accumulators hold
//! an exponentially decayed sum of patterns fed back from an output group.
//! Which blocks of the two weight matrices exist is fixed by the [`Topology`];
//! absent blocks are kept at exactly zero.
//!
//! Training is online backpropagation with momentum on the current step only:
//! the context is treated as an ordinary input and no error flows back
//! through time.

use std::fmt::Write as _;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Starting value of every context unit at word start.
pub const CONTEXT_INIT: f64 = 0.5;
/// Starting value of every accumulator unit at word start.
pub const ACCUMULATOR_INIT: f64 = 0.0;

const WEIGHTS_MAGIC: &str = "srn-weights 1";

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenGroup {
    pub name: String,
    pub size: usize,
    pub recurrent: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputGroup {
    pub name: String,
    pub size: usize,
}

/// Output group `output` is fed back as `a <- decay * a + y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feedback {
    pub output: usize,
    pub decay: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Input,
    /// Previous activations of the given hidden group.
    Context(usize),
    /// Accumulator of the given feedback block.
    Accumulator(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub input_size: usize,
    pub hidden: Vec<HiddenGroup>,
    pub outputs: Vec<OutputGroup>,
    pub feedback: Vec<Feedback>,
    /// `(source, hidden group)` blocks.
    pub hidden_blocks: Vec<(Source, usize)>,
    /// `(hidden group, output group)` blocks.
    pub output_blocks: Vec<(usize, usize)>,
}

impl Topology {
    pub fn new(input_size: usize) -> Self {
        Topology {
            input_size,
            hidden: Vec::new(),
            outputs: Vec::new(),
            feedback: Vec::new(),
            hidden_blocks: Vec::new(),
            output_blocks: Vec::new(),
        }
    }

    /// Adds a hidden group. A recurrent group also gets its context block.
    pub fn add_hidden(&mut self, name: &str, size: usize, recurrent: bool) -> usize {
        let idx = self.hidden.len();
        self.hidden.push(HiddenGroup {
            name: name.to_owned(),
            size,
            recurrent,
        });
        if recurrent {
            self.hidden_blocks.push((Source::Context(idx), idx));
        }
        idx
    }

    pub fn add_output(&mut self, name: &str, size: usize) -> usize {
        self.outputs.push(OutputGroup {
            name: name.to_owned(),
            size,
        });
        self.outputs.len() - 1
    }

    pub fn add_feedback(&mut self, output: usize, decay: f64) -> usize {
        self.feedback.push(Feedback { output, decay });
        self.feedback.len() - 1
    }

    pub fn connect(&mut self, from: Source, hidden: usize) {
        self.hidden_blocks.push((from, hidden));
    }

    pub fn connect_output(&mut self, hidden: usize, output: usize) {
        self.output_blocks.push((hidden, output));
    }

    pub fn output_index(&self, name: &str) -> Option<usize> {
        self.outputs.iter().position(|g| g.name == name)
    }

    pub fn hidden_index(&self, name: &str) -> Option<usize> {
        self.hidden.iter().position(|g| g.name == name)
    }

    fn source_name(&self, s: Source) -> String {
        match s {
            Source::Input => "input".into(),
            Source::Context(h) => match self.hidden.get(h) {
                Some(g) => format!("context[{}]", g.name),
                None => format!("context[#{h}]"),
            },
            Source::Accumulator(f) => format!("accumulator[#{f}]"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::Topology(msg));
        if self.input_size == 0 {
            return err("input layer is empty".into());
        }
        for g in &self.hidden {
            if g.size == 0 {
                return err(format!("hidden group `{}` is empty", g.name));
            }
        }
        for g in &self.outputs {
            if g.size == 0 {
                return err(format!("output group `{}` is empty", g.name));
            }
        }
        for f in &self.feedback {
            if f.output >= self.outputs.len() {
                return err(format!("feedback from missing output group #{}", f.output));
            }
        }
        let mut seen = Vec::new();
        for &(src, h) in &self.hidden_blocks {
            let name = format!("{} -> hidden[#{h}]", self.source_name(src));
            if h >= self.hidden.len() {
                return err(format!("block `{name}` targets a missing hidden group"));
            }
            match src {
                Source::Input => {}
                Source::Context(c) => {
                    if c >= self.hidden.len() || !self.hidden[c].recurrent {
                        return err(format!("block `{name}` reads a missing context"));
                    }
                }
                Source::Accumulator(f) => {
                    if f >= self.feedback.len() {
                        return err(format!("block `{name}` reads a missing accumulator"));
                    }
                }
            }
            if seen.contains(&(src, h)) {
                return err(format!("block `{name}` declared twice"));
            }
            seen.push((src, h));
        }
        let mut seen = Vec::new();
        for &(h, o) in &self.output_blocks {
            if h >= self.hidden.len() || o >= self.outputs.len() {
                return err(format!("block hidden[#{h}] -> output[#{o}] is dangling"));
            }
            if seen.contains(&(h, o)) {
                return err(format!(
                    "block `{}` -> `{}` declared twice",
                    self.hidden[h].name, self.outputs[o].name
                ));
            }
            seen.push((h, o));
        }
        for (i, g) in self.hidden.iter().enumerate() {
            if g.recurrent && !self.hidden_blocks.contains(&(Source::Context(i), i)) {
                return err(format!(
                    "recurrent group `{}` lacks its context block",
                    g.name
                ));
            }
            if !self
                .hidden_blocks
                .iter()
                .any(|&(s, h)| h == i && s != Source::Context(i))
            {
                return err(format!("hidden group `{}` receives no input", g.name));
            }
            if !self.output_blocks.iter().any(|&(h, _)| h == i) {
                return err(format!("hidden group `{}` feeds no output", g.name));
            }
        }
        for (i, g) in self.outputs.iter().enumerate() {
            if !self.output_blocks.iter().any(|&(_, o)| o == i) {
                return err(format!("output group `{}` receives no input", g.name));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    /// Offset of each recurrent hidden group's context in the source vector.
    context: Vec<Option<usize>>,
    accumulator: Vec<usize>,
    n_src: usize,
    hidden: Vec<usize>,
    n_hidden: usize,
    output: Vec<usize>,
    n_out: usize,
}

impl Layout {
    fn new(t: &Topology) -> Self {
        let mut off = t.input_size;
        let context = t
            .hidden
            .iter()
            .map(|g| {
                g.recurrent.then(|| {
                    off += g.size;
                    off - g.size
                })
            })
            .collect();
        let accumulator = t
            .feedback
            .iter()
            .map(|f| {
                off += t.outputs[f.output].size;
                off - t.outputs[f.output].size
            })
            .collect();
        let n_src = off;
        let (hidden, n_hidden) = offsets(t.hidden.iter().map(|g| g.size));
        let (output, n_out) = offsets(t.outputs.iter().map(|g| g.size));
        Layout {
            context,
            accumulator,
            n_src,
            hidden,
            n_hidden,
            output,
            n_out,
        }
    }

    fn source_range(&self, t: &Topology, s: Source) -> std::ops::Range<usize> {
        match s {
            Source::Input => 0..t.input_size,
            Source::Context(h) => {
                let o = self.context[h].expect("recurrent group");
                o..o + t.hidden[h].size
            }
            Source::Accumulator(f) => {
                let o = self.accumulator[f];
                o..o + t.outputs[t.feedback[f].output].size
            }
        }
    }
}

fn offsets(sizes: impl Iterator<Item = usize>) -> (Vec<usize>, usize) {
    let mut total = 0;
    let offs = sizes
        .map(|s| {
            total += s;
            total - s
        })
        .collect();
    (offs, total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub epochs: usize,
    pub init_range: (f64, f64),
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            epochs: 100,
            init_range: (-0.5, 0.5),
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if self.epochs == 0 || self.eval_every == 0 {
            return Err(Error::Config(
                "epochs and eval-every must be at least 1".into(),
            ));
        }
        if self.init_range.0.is_nan()
            || self.init_range.1.is_nan()
            || self.init_range.0 > self.init_range.1
        {
            return Err(Error::Config("empty weight-init range".into()));
        }
        Ok(())
    }
}

/// Gradients of the squared error of one step.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub hidden_weights: Vec<f64>,
    pub hidden_bias: Vec<f64>,
    pub output_weights: Vec<f64>,
    pub output_bias: Vec<f64>,
    pub loss: f64,
}

#[derive(Debug, Clone)]
pub struct Network {
    topo: Topology,
    layout: Layout,
    // n_hidden x n_src, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    m1: Vec<f64>,
    // n_out x n_hidden, row-major
    w2: Vec<f64>,
    b2: Vec<f64>,
    m2: Vec<f64>,
    vw1: Vec<f64>,
    vb1: Vec<f64>,
    vw2: Vec<f64>,
    vb2: Vec<f64>,
    /// Current source state: the input slot holds the last input.
    state: Vec<f64>,
    /// Source vector seen by the last forward step.
    last_src: Vec<f64>,
    hidden: Vec<f64>,
    output: Vec<f64>,
    stepped: bool,
}

fn mask_matrix(
    rows: usize,
    cols: usize,
    blocks: impl Iterator<Item = (std::ops::Range<usize>, std::ops::Range<usize>)>,
) -> Vec<f64> {
    let mut m = vec![0.0; rows * cols];
    for (r, c) in blocks {
        for i in r {
            for j in c.clone() {
                m[i * cols + j] = 1.0;
            }
        }
    }
    m
}

fn init_weights<R: Rng>(mask: &[f64], range: (f64, f64), rng: &mut R) -> Vec<f64> {
    mask.iter()
        .map(|&m| if m != 0.0 { uniform(range, rng) } else { 0.0 })
        .collect()
}

fn uniform<R: Rng>(range: (f64, f64), rng: &mut R) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

impl Network {
    /// Builds a network with weights and biases uniform in `init_range`.
    pub fn build(topo: Topology, init_range: (f64, f64), seed: u64) -> Result<Self> {
        topo.validate()?;
        let layout = Layout::new(&topo);
        let m1 = mask_matrix(
            layout.n_hidden,
            layout.n_src,
            topo.hidden_blocks.iter().map(|&(s, h)| {
                let o = layout.hidden[h];
                (o..o + topo.hidden[h].size, layout.source_range(&topo, s))
            }),
        );
        let m2 = mask_matrix(
            layout.n_out,
            layout.n_hidden,
            topo.output_blocks.iter().map(|&(h, o)| {
                let ro = layout.output[o];
                let co = layout.hidden[h];
                (ro..ro + topo.outputs[o].size, co..co + topo.hidden[h].size)
            }),
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w1 = init_weights(&m1, init_range, &mut rng);
        let b1 = (0..layout.n_hidden)
            .map(|_| uniform(init_range, &mut rng))
            .collect();
        let w2 = init_weights(&m2, init_range, &mut rng);
        let b2 = (0..layout.n_out)
            .map(|_| uniform(init_range, &mut rng))
            .collect();
        let mut net = Network {
            vw1: vec![0.0; w1.len()],
            vb1: vec![0.0; layout.n_hidden],
            vw2: vec![0.0; w2.len()],
            vb2: vec![0.0; layout.n_out],
            state: vec![0.0; layout.n_src],
            last_src: vec![0.0; layout.n_src],
            hidden: vec![0.0; layout.n_hidden],
            output: vec![0.0; layout.n_out],
            stepped: false,
            w1,
            b1,
            m1,
            w2,
            b2,
            m2,
            topo,
            layout,
        };
        net.reset_context();
        Ok(net)
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn input_size(&self) -> usize {
        self.topo.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.layout.n_hidden
    }

    pub fn output_size(&self) -> usize {
        self.layout.n_out
    }

    pub fn output_range(&self, group: usize) -> std::ops::Range<usize> {
        let o = self.layout.output[group];
        o..o + self.topo.outputs[group].size
    }

    pub fn hidden_range(&self, group: usize) -> std::ops::Range<usize> {
        let o = self.layout.hidden[group];
        o..o + self.topo.hidden[group].size
    }

    /// Restores every context and accumulator to its word-start value.
    pub fn reset_context(&mut self) {
        for (h, off) in self.layout.context.iter().enumerate() {
            if let Some(o) = *off {
                self.state[o..o + self.topo.hidden[h].size].fill(CONTEXT_INIT);
            }
        }
        let acc_start = self
            .layout
            .accumulator
            .first()
            .copied()
            .unwrap_or(self.layout.n_src);
        self.state[acc_start..].fill(ACCUMULATOR_INIT);
        self.stepped = false;
    }

    /// Clears momentum, e.g. when a new training phase starts.
    pub fn reset_momentum(&mut self) {
        for v in [&mut self.vw1, &mut self.vb1, &mut self.vw2, &mut self.vb2] {
            v.fill(0.0);
        }
    }

    /// One time step: hidden groups from the source vector, then outputs from
    /// the hidden layer. Contexts then take the new hidden values.
    pub fn forward(&mut self, input: &[f64]) -> Result<&[f64]> {
        if input.len() != self.topo.input_size {
            return Err(Error::Dimension {
                context: "forward input",
                expected: self.topo.input_size,
                got: input.len(),
            });
        }
        self.state[..input.len()].copy_from_slice(input);
        self.last_src.copy_from_slice(&self.state);
        let n_src = self.layout.n_src;
        for (i, h) in self.hidden.iter_mut().enumerate() {
            let row = &self.w1[i * n_src..(i + 1) * n_src];
            *h = logistic(self.b1[i] + dot(row, &self.last_src));
        }
        self.compute_output();
        for (h, off) in self.layout.context.iter().enumerate() {
            if let Some(o) = *off {
                let r = self.layout.hidden[h];
                let size = self.topo.hidden[h].size;
                self.state[o..o + size].copy_from_slice(&self.hidden[r..r + size]);
            }
        }
        self.stepped = true;
        Ok(&self.output)
    }

    fn compute_output(&mut self) {
        let n_h = self.layout.n_hidden;
        for (o, y) in self.output.iter_mut().enumerate() {
            let row = &self.w2[o * n_h..(o + 1) * n_h];
            *y = logistic(self.b2[o] + dot(row, &self.hidden));
        }
    }

    /// Output activations for an arbitrary hidden pattern (no state change).
    pub fn output_from_hidden(&self, hidden: &[f64]) -> Result<Vec<f64>> {
        let n_h = self.layout.n_hidden;
        if hidden.len() != n_h {
            return Err(Error::Dimension {
                context: "output_from_hidden",
                expected: n_h,
                got: hidden.len(),
            });
        }
        Ok((0..self.layout.n_out)
            .map(|o| logistic(self.b2[o] + dot(&self.w2[o * n_h..(o + 1) * n_h], hidden)))
            .collect())
    }

    pub fn hidden(&self) -> &[f64] {
        &self.hidden
    }

    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn output_group(&self, group: usize) -> &[f64] {
        &self.output[self.output_range(group)]
    }

    pub fn context(&self, group: usize) -> Option<&[f64]> {
        self.layout.context[group].map(|o| &self.state[o..o + self.topo.hidden[group].size])
    }

    pub fn accumulator(&self, feedback: usize) -> &[f64] {
        let o = self.layout.accumulator[feedback];
        &self.state[o..o + self.topo.outputs[self.topo.feedback[feedback].output].size]
    }

    /// `a <- decay * a + pattern` for the given feedback block.
    pub fn feed_back(&mut self, feedback: usize, pattern: &[f64]) -> Result<()> {
        let fb = self.topo.feedback[feedback];
        let size = self.topo.outputs[fb.output].size;
        if pattern.len() != size {
            return Err(Error::Dimension {
                context: "feed_back",
                expected: size,
                got: pattern.len(),
            });
        }
        let o = self.layout.accumulator[feedback];
        for (a, &y) in self.state[o..o + size].iter_mut().zip(pattern) {
            *a = fb.decay * *a + y;
        }
        Ok(())
    }

    fn check_target(&self, target: &[f64], active: &[bool]) -> Result<()> {
        if target.len() != self.layout.n_out {
            return Err(Error::Dimension {
                context: "backward target",
                expected: self.layout.n_out,
                got: target.len(),
            });
        }
        if active.len() != self.topo.outputs.len() {
            return Err(Error::Dimension {
                context: "backward output-group mask",
                expected: self.topo.outputs.len(),
                got: active.len(),
            });
        }
        Ok(())
    }

    fn active_units(&self, active: &[bool]) -> Vec<bool> {
        let mut units = vec![false; self.layout.n_out];
        for (g, &on) in active.iter().enumerate() {
            if on {
                units[self.output_range(g)].fill(true);
            }
        }
        units
    }

    fn output_deltas(&self, target: &[f64], units: &[bool]) -> (Vec<f64>, f64) {
        let mut loss = 0.0;
        let delta = self
            .output
            .iter()
            .zip(target)
            .zip(units)
            .map(|((&y, &t), &on)| {
                if on {
                    loss += 0.5 * (y - t) * (y - t);
                    (y - t) * y * (1.0 - y)
                } else {
                    0.0
                }
            })
            .collect();
        (delta, loss)
    }

    fn hidden_deltas(&self, delta_out: &[f64], units: &[bool]) -> Vec<f64> {
        let n_h = self.layout.n_hidden;
        let mut back = vec![0.0; n_h];
        for (o, &d) in delta_out.iter().enumerate() {
            if units[o] && d != 0.0 {
                for (b, &w) in back.iter_mut().zip(&self.w2[o * n_h..(o + 1) * n_h]) {
                    *b += w * d;
                }
            }
        }
        back.iter()
            .zip(&self.hidden)
            .map(|(&b, &h)| b * h * (1.0 - h))
            .collect()
    }

    /// Gradients of `0.5 * sum (y - t)^2` over the active output groups for
    /// the last forward step.
    pub fn gradients(&self, target: &[f64], active: &[bool]) -> Result<Gradients> {
        self.check_target(target, active)?;
        let units = self.active_units(active);
        let (d_out, loss) = self.output_deltas(target, &units);
        let d_hid = self.hidden_deltas(&d_out, &units);
        let n_h = self.layout.n_hidden;
        let n_src = self.layout.n_src;
        let mut gw2 = vec![0.0; self.w2.len()];
        for (o, &d) in d_out.iter().enumerate() {
            for j in 0..n_h {
                gw2[o * n_h + j] = d * self.hidden[j] * self.m2[o * n_h + j];
            }
        }
        let mut gw1 = vec![0.0; self.w1.len()];
        for (i, &d) in d_hid.iter().enumerate() {
            for k in 0..n_src {
                gw1[i * n_src + k] = d * self.last_src[k] * self.m1[i * n_src + k];
            }
        }
        Ok(Gradients {
            hidden_weights: gw1,
            hidden_bias: d_hid,
            output_weights: gw2,
            output_bias: d_out,
            loss,
        })
    }

    /// One online gradient step with momentum for the last forward step.
    /// Output groups with `active[g] == false` contribute no error and their
    /// incoming weights are left untouched. Returns the step's loss.
    pub fn backward(&mut self, target: &[f64], active: &[bool], cfg: &TrainConfig) -> Result<f64> {
        self.check_target(target, active)?;
        if !self.stepped {
            return Err(Error::Config("backward called before forward".into()));
        }
        let units = self.active_units(active);
        let (d_out, loss) = self.output_deltas(target, &units);
        let d_hid = self.hidden_deltas(&d_out, &units);
        let (lr, mom) = (cfg.learning_rate, cfg.momentum);
        let n_h = self.layout.n_hidden;
        let n_src = self.layout.n_src;

        for (o, &d) in d_out.iter().enumerate() {
            if !units[o] {
                continue;
            }
            let r = o * n_h..(o + 1) * n_h;
            for (((w, v), &m), &h) in self.w2[r.clone()]
                .iter_mut()
                .zip(&mut self.vw2[r.clone()])
                .zip(&self.m2[r])
                .zip(&self.hidden)
            {
                *v = mom * *v - lr * d * h * m;
                *w += *v;
            }
            self.vb2[o] = mom * self.vb2[o] - lr * d;
            self.b2[o] += self.vb2[o];
        }
        for (i, &d) in d_hid.iter().enumerate() {
            let r = i * n_src..(i + 1) * n_src;
            for (((w, v), &m), &s) in self.w1[r.clone()]
                .iter_mut()
                .zip(&mut self.vw1[r.clone()])
                .zip(&self.m1[r])
                .zip(&self.last_src)
            {
                *v = mom * *v - lr * d * s * m;
                *w += *v;
            }
            self.vb1[i] = mom * self.vb1[i] - lr * d;
            self.b1[i] += self.vb1[i];
        }
        Ok(loss)
    }

    /// Loss of the last step's source vector under the current weights.
    fn replay_loss(&self, target: &[f64], units: &[bool]) -> f64 {
        let n_src = self.layout.n_src;
        let hidden: Vec<f64> = (0..self.layout.n_hidden)
            .map(|i| {
                logistic(self.b1[i] + dot(&self.w1[i * n_src..(i + 1) * n_src], &self.last_src))
            })
            .collect();
        let out = self.output_from_hidden(&hidden).expect("hidden size");
        out.iter()
            .zip(target)
            .zip(units)
            .filter(|(_, &on)| on)
            .map(|((&y, &t), _)| 0.5 * (y - t) * (y - t))
            .sum()
    }

    pub fn hidden_mask(&self) -> &[f64] {
        &self.m1
    }

    pub fn output_mask(&self) -> &[f64] {
        &self.m2
    }

    pub fn hidden_weights(&self) -> &[f64] {
        &self.w1
    }

    pub fn output_weights(&self) -> &[f64] {
        &self.w2
    }

    pub fn output_bias(&self) -> &[f64] {
        &self.b2
    }

    /// Weights from hidden group `hidden` into output group `output`, row-major.
    pub fn output_block(&self, hidden: usize, output: usize) -> Vec<f64> {
        self.block_of(&self.w2, hidden, output)
    }

    pub fn output_block_mask(&self, hidden: usize, output: usize) -> Vec<f64> {
        self.block_of(&self.m2, hidden, output)
    }

    fn block_of(&self, m: &[f64], hidden: usize, output: usize) -> Vec<f64> {
        let n_h = self.layout.n_hidden;
        let cols = self.hidden_range(hidden);
        self.output_range(output)
            .flat_map(|o| m[o * n_h + cols.start..o * n_h + cols.end].iter().copied())
            .collect()
    }

    /// True when every weight outside the topology's blocks is exactly zero.
    pub fn masks_respected(&self) -> bool {
        self.w1
            .iter()
            .zip(&self.m1)
            .all(|(&w, &m)| m != 0.0 || w == 0.0)
            && self
                .w2
                .iter()
                .zip(&self.m2)
                .all(|(&w, &m)| m != 0.0 || w == 0.0)
    }

    /// Zeroes every weight and bias.
    pub fn zero_weights(&mut self) {
        for v in [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2] {
            v.fill(0.0);
        }
    }

    /// Appends a fresh output group fed by hidden group `from_hidden`.
    pub fn add_output_group(
        &mut self,
        name: &str,
        size: usize,
        from_hidden: usize,
        init_range: (f64, f64),
        seed: u64,
    ) -> Result<usize> {
        let mut topo = self.topo.clone();
        let g = topo.add_output(name, size);
        topo.connect_output(from_hidden, g);
        let old_groups: Vec<usize> = (0..self.topo.outputs.len()).collect();
        self.reshape_outputs(topo, &old_groups, init_range, seed)?;
        Ok(g)
    }

    /// Adds `extra` fresh units at the end of output group `group`.
    pub fn grow_output_group(
        &mut self,
        group: usize,
        extra: usize,
        init_range: (f64, f64),
        seed: u64,
    ) -> Result<()> {
        if self.topo.feedback.iter().any(|f| f.output == group) {
            return Err(Error::Topology(format!(
                "output group `{}` is fed back and cannot grow",
                self.topo.outputs[group].name
            )));
        }
        let mut topo = self.topo.clone();
        topo.outputs[group].size += extra;
        let old_groups: Vec<usize> = (0..self.topo.outputs.len()).collect();
        self.reshape_outputs(topo, &old_groups, init_range, seed)
    }

    /// Rebuilds the output layer for `topo`, copying old group `g`'s rows
    /// into the first rows of new group `old_groups[g]`. Everything else is
    /// freshly initialized; momentum is cleared.
    fn reshape_outputs(
        &mut self,
        topo: Topology,
        old_groups: &[usize],
        init_range: (f64, f64),
        seed: u64,
    ) -> Result<()> {
        let fresh = Network::build(topo, init_range, seed)?;
        if fresh.layout.n_src != self.layout.n_src || fresh.layout.n_hidden != self.layout.n_hidden
        {
            return Err(Error::Topology(
                "output reshape changed the hidden layer".into(),
            ));
        }
        let mut next = fresh;
        next.w1.copy_from_slice(&self.w1);
        next.b1.copy_from_slice(&self.b1);
        let n_h = self.layout.n_hidden;
        for (g, &ng) in old_groups.iter().enumerate() {
            let old = self.output_range(g);
            let new_start = next.layout.output[ng];
            for (k, o) in old.enumerate() {
                let n = new_start + k;
                next.w2[n * n_h..(n + 1) * n_h].copy_from_slice(&self.w2[o * n_h..(o + 1) * n_h]);
                next.b2[n] = self.b2[o];
            }
        }
        next.state.copy_from_slice(&self.state);
        *self = next;
        self.reset_momentum();
        Ok(())
    }

    /// Versioned text dump: per block a `name rows cols` line followed by
    /// one line of row-major values.
    pub fn save_weights(&self) -> String {
        let mut out = String::from(WEIGHTS_MAGIC);
        out.push('\n');
        let blocks: [(&str, usize, usize, &[f64]); 4] = [
            (
                "hidden.weight",
                self.layout.n_hidden,
                self.layout.n_src,
                &self.w1,
            ),
            ("hidden.bias", self.layout.n_hidden, 1, &self.b1),
            (
                "output.weight",
                self.layout.n_out,
                self.layout.n_hidden,
                &self.w2,
            ),
            ("output.bias", self.layout.n_out, 1, &self.b2),
        ];
        for (name, rows, cols, vals) in blocks {
            let _ = writeln!(out, "{name} {rows} {cols}");
            let line: Vec<String> = vals.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Restores weights written by [`Network::save_weights`] into a network
    /// of the same topology. Momentum is cleared.
    pub fn load_weights(&mut self, text: &str) -> Result<()> {
        let bad = |m: String| Error::WeightFormat(m);
        let mut lines = text.lines();
        if lines.next() != Some(WEIGHTS_MAGIC) {
            return Err(bad("missing or unsupported version header".into()));
        }
        let expected = [
            ("hidden.weight", self.layout.n_hidden, self.layout.n_src),
            ("hidden.bias", self.layout.n_hidden, 1),
            ("output.weight", self.layout.n_out, self.layout.n_hidden),
            ("output.bias", self.layout.n_out, 1),
        ];
        let mut loaded = Vec::with_capacity(4);
        for (name, rows, cols) in expected {
            let header = lines
                .next()
                .ok_or_else(|| bad(format!("missing block {name}")))?;
            let want = format!("{name} {rows} {cols}");
            if header != want {
                return Err(bad(format!("expected `{want}`, found `{header}`")));
            }
            let values = lines
                .next()
                .ok_or_else(|| bad(format!("missing values for {name}")))?
                .split_ascii_whitespace()
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|_| bad(format!("bad number `{v}` in {name}")))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.len() != rows * cols {
                return Err(bad(format!("{name}: expected {} values", rows * cols)));
            }
            loaded.push(values);
        }
        let [w1, b1, w2, b2]: [Vec<f64>; 4] = loaded.try_into().expect("four blocks");
        let respects = |w: &[f64], m: &[f64]| w.iter().zip(m).all(|(&w, &m)| m != 0.0 || w == 0.0);
        if !respects(&w1, &self.m1) || !respects(&w2, &self.m2) {
            return Err(bad("non-zero weight outside the topology".into()));
        }
        self.w1 = w1;
        self.b1 = b1;
        self.w2 = w2;
        self.b2 = b2;
        self.reset_momentum();
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of comparing analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_relative: f64,
    pub max_absolute: f64,
    pub checked: usize,
    /// Largest |gradient| seen on a masked-off weight, analytic or numeric.
    pub max_masked: f64,
}

/// Parameter accessor, analytic gradient and optional mask.
type ParamView<'a> = (
    fn(&mut Network) -> &mut Vec<f64>,
    &'a [f64],
    Option<&'a [f64]>,
);

pub const GRAD_CHECK_EPSILON: f64 = 1e-5;
/// Relative errors are taken against `max(|analytic|, |numeric|, floor)`.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Runs `inputs` through a copy of `net` and, at every step, compares the
/// analytic gradient of that step's loss (context held fixed) with central
/// differences on every weight and bias. Accumulators are teacher-forced from
/// the targets of their output groups. All output groups contribute error.
pub fn finite_diff_check(
    net: &Network,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<GradCheck> {
    if inputs.len() != targets.len() {
        return Err(Error::Dimension {
            context: "finite_diff_check sequence",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    let mut net = net.clone();
    net.reset_context();
    let active = vec![true; net.topo.outputs.len()];
    let units = net.active_units(&active);
    let mut res = GradCheck {
        max_relative: 0.0,
        max_absolute: 0.0,
        checked: 0,
        max_masked: 0.0,
    };
    let eps = GRAD_CHECK_EPSILON;
    for (x, t) in inputs.iter().zip(targets) {
        net.forward(x)?;
        let g = net.gradients(t, &active)?;
        let mut probe = net.clone();
        let params: [ParamView; 4] = [
            (|n| &mut n.w1, &g.hidden_weights, Some(&net.m1)),
            (|n| &mut n.b1, &g.hidden_bias, None),
            (|n| &mut n.w2, &g.output_weights, Some(&net.m2)),
            (|n| &mut n.b2, &g.output_bias, None),
        ];
        for (field, analytic, mask) in params {
            for (k, &a) in analytic.iter().enumerate() {
                let masked = mask.is_some_and(|m| m[k] == 0.0);
                let numeric = if masked {
                    0.0
                } else {
                    let orig = field(&mut probe)[k];
                    field(&mut probe)[k] = orig + eps;
                    let lp = probe.replay_loss(t, &units);
                    field(&mut probe)[k] = orig - eps;
                    let lm = probe.replay_loss(t, &units);
                    field(&mut probe)[k] = orig;
                    (lp - lm) / (2.0 * eps)
                };
                if masked {
                    res.max_masked = res.max_masked.max(a.abs()).max(numeric.abs());
                    continue;
                }
                let abs = (a - numeric).abs();
                let rel = abs / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR);
                res.max_absolute = res.max_absolute.max(abs);
                res.max_relative = res.max_relative.max(rel);
                res.checked += 1;
            }
        }
        for (f, fb) in net.topo.feedback.clone().iter().enumerate() {
            let r = net.output_range(fb.output);
            net.feed_back(f, &t[r])?;
        }
    }
    Ok(res)
}

/// A network with an input sequence and per-step targets.
pub type CheckCase = (Network, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// A random small modular network (at most 50 units) with a short input
/// sequence and binary targets, for gradient checking. Some draws include a
/// fed-back output group read through an accumulator.
pub fn random_check_case(seed: u64) -> Result<CheckCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = Topology::new(rng.gen_range(2..=5));
    let n_hidden = rng.gen_range(1..=3);
    let hidden: Vec<usize> = (0..n_hidden)
        .map(|i| t.add_hidden(&format!("h{i}"), rng.gen_range(1..=4), rng.gen_bool(0.7)))
        .collect();
    let outputs: Vec<usize> = (0..rng.gen_range(1..=3))
        .map(|i| t.add_output(&format!("o{i}"), rng.gen_range(1..=3)))
        .collect();
    for &h in &hidden {
        t.connect(Source::Input, h);
        for &g in &hidden {
            if g != h && t.hidden[g].recurrent && rng.gen_bool(0.3) {
                t.connect(Source::Context(g), h);
            }
        }
    }
    // every hidden group feeds one output; extra links are random
    for (i, &h) in hidden.iter().enumerate() {
        t.connect_output(h, outputs[i % outputs.len()]);
        for &o in &outputs {
            if o != outputs[i % outputs.len()] && rng.gen_bool(0.3) {
                t.connect_output(h, o);
            }
        }
    }
    for &o in &outputs {
        if !t.output_blocks.iter().any(|&(_, out)| out == o) {
            t.connect_output(hidden[rng.gen_range(0..hidden.len())], o);
        }
    }
    if rng.gen_bool(0.5) {
        let f = t.add_feedback(outputs[0], 0.5);
        t.connect(
            Source::Accumulator(f),
            hidden[rng.gen_range(0..hidden.len())],
        );
    }
    let input_size = t.input_size;
    let net = Network::build(t, (-1.0, 1.0), rng.gen())?;
    let steps = rng.gen_range(2..=4);
    let inputs = (0..steps)
        .map(|_| (0..input_size).map(|_| rng.gen::<f64>()).collect())
        .collect();
    let targets = (0..steps)
        .map(|_| {
            (0..net.output_size())
                .map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    Ok((net, inputs, targets))
}

/// Gradient-checks `count` random networks drawn from seeds derived from
/// `seed` and returns the worst case over all of them.
pub fn gradient_check_suite(count: usize, seed: u64) -> Result<GradCheck> {
    let mut worst = GradCheck {
        max_relative: 0.0,
        max_absolute: 0.0,
        checked: 0,
        max_masked: 0.0,
    };
    for i in 0..count as u64 {
        let (net, xs, ts) = random_check_case(seed.wrapping_mul(1_000_003).wrapping_add(i))?;
        let r = finite_diff_check(&net, &xs, &ts)?;
        worst.max_relative = worst.max_relative.max(r.max_relative);
        worst.max_absolute = worst.max_absolute.max(r.max_absolute);
        worst.max_masked = worst.max_masked.max(r.max_masked);
        worst.checked += r.checked;
    }
    Ok(worst)
}
