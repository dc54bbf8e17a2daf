//! Random composite graphs checked against central finite differences.

use numgame::kernel::{Graph, NodeId, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy)]
enum Step {
    Tanh,
    Sigmoid,
    Softmax,
    LogSoftmax,
    AddPrev,
    MulPrev,
    Scale(f64),
    AffineBack,
    ConcatSliceBack(bool),
    Lstm,
    GatherBack,
    SegmentSum,
    ScaleRowsByDots,
}

pub struct Program {
    rows: usize,
    width: usize,
    steps: Vec<Step>,
    targets: Vec<Option<usize>>,
    gather: Vec<usize>,
    pub params: Vec<Tensor>,
}

impl Program {
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rows = rng.gen_range(1..=3);
        let width = rng.gen_range(2..=4);
        let n = rng.gen_range(4..=9);
        let mut steps: Vec<Step> = (0..n)
            .map(|_| match rng.gen_range(0..13) {
                0 => Step::Tanh,
                1 => Step::Sigmoid,
                2 => Step::Softmax,
                3 => Step::LogSoftmax,
                4 => Step::AddPrev,
                5 => Step::MulPrev,
                6 => Step::Scale(rng.gen_range(-2.0..2.0)),
                7 => Step::AffineBack,
                8 => Step::ConcatSliceBack(rng.gen()),
                9 => Step::Lstm,
                10 => Step::GatherBack,
                11 => Step::SegmentSum,
                _ => Step::ScaleRowsByDots,
            })
            .collect();
        // every primitive appears at least once across a batch of programs
        steps.push(match seed % 4 {
            0 => Step::Lstm,
            1 => Step::SegmentSum,
            2 => Step::ScaleRowsByDots,
            _ => Step::GatherBack,
        });
        let targets = (0..rows)
            .map(|_| if rng.gen_bool(0.8) { Some(rng.gen_range(0..width)) } else { None })
            .collect();
        let gather = (0..rows).map(|_| rng.gen_range(0..4)).collect();
        let mut uniform = |shape: &[usize]| {
            let n: usize = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
        };
        let params = vec![
            uniform(&[rows, width]),          // x
            uniform(&[width, width]),         // affine weight
            uniform(&[width]),                // affine bias
            uniform(&[2 * width, width]),     // back-projection after concat
            uniform(&[2 * width, 4 * width]), // lstm weight
            uniform(&[4 * width]),            // lstm bias
            uniform(&[rows, width]),          // lstm cell state
            uniform(&[4, width]),             // gather table
            uniform(&[2 * rows, 1]),          // segment weights
            uniform(&[2 * rows, width]),      // keys for row dots
            uniform(&[rows, width]),          // mixing weights for the final sum
        ];
        Self {
            rows,
            width,
            steps,
            targets,
            gather,
            params,
        }
    }

    /// Builds the graph for `params` and returns it with the loss node and the
    /// parameter nodes in order.
    pub fn build(&self, params: &[Tensor]) -> (Graph, NodeId, Vec<NodeId>) {
        let mut g = Graph::new();
        let p: Vec<NodeId> = params.iter().map(|t| g.param(t.clone()).unwrap()).collect();
        let mut prev = p[0];
        let mut cur = p[0];
        for step in &self.steps {
            let next = match *step {
                Step::Tanh => g.tanh(cur).unwrap(),
                Step::Sigmoid => g.sigmoid(cur).unwrap(),
                Step::Softmax => g.softmax(cur).unwrap(),
                Step::LogSoftmax => {
                    let l = g.log_softmax(cur).unwrap();
                    g.scale(l, 0.3).unwrap()
                }
                Step::AddPrev => g.add(cur, prev).unwrap(),
                Step::MulPrev => g.mul(cur, prev).unwrap(),
                Step::Scale(c) => g.scale(cur, c).unwrap(),
                Step::AffineBack => g.affine(cur, p[1], p[2]).unwrap(),
                Step::ConcatSliceBack(first) => {
                    let cat = g.concat(&[cur, prev]).unwrap();
                    if first {
                        g.slice_cols(cat, 0, self.width).unwrap()
                    } else {
                        let w = g.matmul(cat, p[3]).unwrap();
                        g.tanh(w).unwrap()
                    }
                }
                Step::Lstm => {
                    let s = g.lstm_cell(cur, prev, p[6], p[4], p[5]).unwrap();
                    let (h, c) = g.lstm_split(s).unwrap();
                    g.add(h, c).unwrap()
                }
                Step::GatherBack => {
                    let rows = g.gather_rows(p[7], &self.gather).unwrap();
                    g.mul(rows, cur).unwrap()
                }
                Step::SegmentSum => {
                    // duplicate every row and fold it back with learned weights
                    let idx: Vec<usize> = (0..self.rows).flat_map(|r| [r, r]).collect();
                    let seg = idx.clone();
                    let dup = g.gather_rows(cur, &idx).unwrap();
                    g.segment_weighted_sum(p[8], dup, &seg, self.rows).unwrap()
                }
                Step::ScaleRowsByDots => {
                    let dots = g.row_dots(cur, p[9]).unwrap();
                    let first = g.slice_cols(dots, 0, 1).unwrap();
                    let s = g.tanh(first).unwrap();
                    g.scale_rows(cur, s).unwrap()
                }
            };
            prev = cur;
            cur = next;
        }
        let ce = g.cross_entropy(cur, &self.targets).unwrap();
        let ce_sum = g.sum(ce).unwrap();
        let mixed = g.mul(cur, p[10]).unwrap();
        let mixed_sum = g.sum(mixed).unwrap();
        let both = g.add(ce_sum, mixed_sum).unwrap();
        (g, both, p)
    }

    pub fn loss(&self, params: &[Tensor]) -> f64 {
        let (g, l, _) = self.build(params);
        g.value(l).item()
    }
}

/// Relative error `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)` over all
/// parameters, with central differences of step `h`.
pub fn relative_error(program: &Program, h: f64) -> f64 {
    let (g, loss, nodes) = program.build(&program.params);
    let grads = g.backward(loss).unwrap();
    let mut diff = 0.0;
    let mut na = 0.0;
    let mut nn = 0.0;
    for (pi, node) in nodes.iter().enumerate() {
        let analytic = grads.get(*node).unwrap();
        for j in 0..program.params[pi].len() {
            let mut plus = program.params.clone();
            plus[pi].data_mut()[j] += h;
            let mut minus = program.params.clone();
            minus[pi].data_mut()[j] -= h;
            let numeric = (program.loss(&plus) - program.loss(&minus)) / (2.0 * h);
            let a = analytic.data()[j];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
    }
    diff.sqrt() / na.sqrt().max(nn.sqrt()).max(1e-12)
}
