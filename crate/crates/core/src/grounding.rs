//! Groundings of the LTN vocabulary: variables, `getEmbedding`,
//! `getPrototypes` and `isOfClass`.

use rand::Rng;

use crate::diffcore::{truncated_normal, Parameter, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::realogic::Truths;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Features,
    Embeddings,
    Labels,
    Attributes,
}

/// An LTN variable grounded as a sequence of individuals (matrix rows), with
/// an optional parallel label sequence.
#[derive(Clone, Debug)]
pub struct VariableGrounding<'t> {
    pub name: String,
    pub domain: Domain,
    pub values: Var<'t>,
    pub labels: Option<Vec<usize>>,
}

impl<'t> VariableGrounding<'t> {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        values: Var<'t>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        let name = name.into();
        let shape = values.shape();
        if shape.len() != 2 {
            return Err(Error::dim(format!("variable '{name}' must be a matrix, got {shape:?}")));
        }
        if let Some(l) = &labels {
            if l.len() != shape[0] {
                return Err(Error::dim(format!(
                    "variable '{name}' has {} rows but {} labels",
                    shape[0],
                    l.len()
                )));
            }
        }
        Ok(VariableGrounding {
            name,
            domain,
            values,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Class prototypes on a tape with their labels, strictly ascending.
#[derive(Clone, Debug)]
pub struct PrototypeSet<'t> {
    prototypes: Var<'t>,
    labels: Vec<usize>,
}

impl<'t> PrototypeSet<'t> {
    pub fn new(prototypes: Var<'t>, labels: Vec<usize>) -> Result<Self> {
        let shape = prototypes.shape();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::dim(format!(
                "{} prototype labels for prototype tensor {shape:?}",
                labels.len()
            )));
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::contract("prototype labels must be unique and ascending"));
        }
        if !prototypes.value().all_finite() {
            return Err(Error::Domain("non-finite prototype".into()));
        }
        Ok(PrototypeSet { prototypes, labels })
    }

    pub fn prototypes(&self) -> Var<'t> {
        self.prototypes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn detach(&self) -> Prototypes {
        Prototypes {
            values: (*self.prototypes.value()).clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Tape-free prototypes, used for prediction and export.
#[derive(Clone, Debug, PartialEq)]
pub struct Prototypes {
    pub values: Tensor,
    pub labels: Vec<usize>,
}

impl Prototypes {
    /// Keeps only the prototypes whose label is in `keep`.
    pub fn restrict(&self, keep: &[usize]) -> Result<Prototypes> {
        let rows: Vec<usize> = (0..self.labels.len())
            .filter(|&i| keep.contains(&self.labels[i]))
            .collect();
        if rows.is_empty() {
            return Err(Error::contract("restriction leaves no prototypes"));
        }
        Ok(Prototypes {
            values: self.values.select_rows(&rows)?,
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

/// Fully connected layer `y = act(x W + b)`, `W: [in x out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

impl Dense {
    pub fn new(weight: Parameter, bias: Parameter, activation: Activation) -> Result<Self> {
        let (ws, bs) = (weight.value.shape(), bias.value.shape());
        if ws.len() != 2 || bs.len() != 1 || ws[1] != bs[0] {
            return Err(Error::dim(format!("dense layer weight {ws:?} with bias {bs:?}")));
        }
        Ok(Dense {
            weight,
            bias,
            activation,
        })
    }

    pub fn init<R: Rng + ?Sized>(
        name: &str,
        input: usize,
        output: usize,
        activation: Activation,
        stddev: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let w = truncated_normal(vec![input, output], stddev, rng)?;
        Dense::new(
            Parameter::new(format!("{name}.weight"), w, true),
            Parameter::new(format!("{name}.bias"), Tensor::zeros(vec![output])?, false),
            activation,
        )
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }
}

/// Stack of dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("an MLP needs at least one layer"));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::dim(format!(
                    "layer widths do not chain: {} -> {}",
                    w[0].output_dim(),
                    w[1].input_dim()
                )));
            }
        }
        let mut names: Vec<&str> = layers
            .iter()
            .flat_map(|l| [l.weight.name.as_str(), l.bias.name.as_str()])
            .collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::contract("parameter names must be unique"));
        }
        Ok(Mlp { layers })
    }

    /// Layers `dims[0] -> dims[1] -> ...`, each followed by its activation.
    pub fn init<R: Rng + ?Sized>(
        prefix: &str,
        dims: &[usize],
        activations: &[Activation],
        stddev: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::contract("need one activation per layer"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .enumerate()
            .map(|(i, (w, &act))| Dense::init(&format!("{prefix}.layer{}", i + 1), w[0], w[1], act, stddev, rng))
            .collect::<Result<Vec<_>>>()?;
        Mlp::new(layers)
    }

    /// One linear layer with identity weights and zero bias.
    pub fn identity(prefix: &str, dim: usize) -> Result<Self> {
        Mlp::new(vec![Dense::new(
            Parameter::new(format!("{prefix}.layer1.weight"), Tensor::identity(dim)?, true),
            Parameter::new(format!("{prefix}.layer1.bias"), Tensor::zeros(vec![dim])?, false),
            Activation::Identity,
        )?])
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// Weights and biases, layer by layer.
    pub fn parameters(&self) -> Vec<&Parameter> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias]).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Parameter> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundMlp<'t> {
        BoundMlp {
            layers: self
                .layers
                .iter()
                .map(|l| BoundDense {
                    weight: tape.variable(l.weight.value.clone()),
                    bias: tape.variable(l.bias.value.clone()),
                    activation: l.activation,
                    regularized: [l.weight.regularized, l.bias.regularized],
                })
                .collect(),
        }
    }

    /// Binds to existing variables, given in [`Mlp::parameters`] order.
    pub fn bind_with<'t>(&self, vars: &[Var<'t>]) -> Result<BoundMlp<'t>> {
        let params = self.parameters();
        if vars.len() != params.len() {
            return Err(Error::contract(format!("{} variables for {} parameters", vars.len(), params.len())));
        }
        for (v, p) in vars.iter().zip(&params) {
            if v.shape() != p.value.shape() {
                return Err(Error::dim(format!("'{}' is {:?}, variable is {:?}", p.name, p.value.shape(), v.shape())));
            }
        }
        Ok(BoundMlp {
            layers: self
                .layers
                .iter()
                .zip(vars.chunks(2))
                .map(|(l, wb)| BoundDense {
                    weight: wb[0],
                    bias: wb[1],
                    activation: l.activation,
                    regularized: [l.weight.regularized, l.bias.regularized],
                })
                .collect(),
        })
    }

    /// Tape-free forward pass.
    pub fn forward_tensor(&self, x: &Tensor) -> Result<Tensor> {
        let tape = Tape::new();
        let y = self.bind(&tape).forward(tape.constant(x.clone()))?;
        Ok((*y.value()).clone())
    }
}

struct BoundDense<'t> {
    weight: Var<'t>,
    bias: Var<'t>,
    activation: Activation,
    regularized: [bool; 2],
}

/// An [`Mlp`] whose parameters are variables on a tape.
pub struct BoundMlp<'t> {
    layers: Vec<BoundDense<'t>>,
}

impl<'t> BoundMlp<'t> {
    pub fn forward(&self, x: Var<'t>) -> Result<Var<'t>> {
        let mut h = x;
        for l in &self.layers {
            h = h.matmul(l.weight)?.add(l.bias)?;
            if l.activation == Activation::Relu {
                h = h.relu();
            }
        }
        Ok(h)
    }

    /// Variables in [`Mlp::parameters`] order.
    pub fn param_vars(&self) -> Vec<Var<'t>> {
        self.layers.iter().flat_map(|l| [l.weight, l.bias]).collect()
    }

    pub fn regularized_vars(&self) -> Vec<Var<'t>> {
        self.layers
            .iter()
            .flat_map(|l| [(l.weight, l.regularized[0]), (l.bias, l.regularized[1])])
            .filter_map(|(v, r)| r.then_some(v))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].weight.shape()[1]
    }
}

/// `g_theta`: attributes to the embedding space, two dense layers, ReLU after each.
#[derive(Clone, Debug, PartialEq)]
pub struct SemanticEncoder {
    mlp: Mlp,
}

impl SemanticEncoder {
    pub const DEFAULT_HIDDEN: usize = 1600;

    pub fn init<R: Rng + ?Sized>(attr_dim: usize, hidden: usize, embed_dim: usize, stddev: f64, rng: &mut R) -> Result<Self> {
        let mlp = Mlp::init(
            "g",
            &[attr_dim, hidden, embed_dim],
            &[Activation::Relu, Activation::Relu],
            stddev,
            rng,
        )?;
        Ok(SemanticEncoder { mlp })
    }

    pub fn from_mlp(mlp: Mlp) -> Result<Self> {
        if mlp.layers().len() != 2 || mlp.layers().iter().any(|l| l.activation != Activation::Relu) {
            return Err(Error::contract("semantic encoder is two ReLU dense layers"));
        }
        Ok(SemanticEncoder { mlp })
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    pub fn mlp_mut(&mut self) -> &mut Mlp {
        &mut self.mlp
    }

    pub fn attr_dim(&self) -> usize {
        self.mlp.input_dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.mlp.output_dim()
    }

    /// Prototypes for every class from its attribute row, no tape.
    pub fn prototypes(&self, attributes: &Tensor, labels: &[usize]) -> Result<Prototypes> {
        let tape = Tape::new();
        let g = self.mlp.bind(&tape);
        let p = get_prototypes_zsl(tape.constant(attributes.clone()), labels, &g)?;
        Ok(p.detach())
    }
}

/// `f_theta`, the query embedding function.
#[derive(Clone, Debug, PartialEq)]
pub enum EmbeddingFunction {
    /// Precomputed backbone features used as embeddings.
    Identity,
    Network(Mlp),
}

impl EmbeddingFunction {
    pub fn bind<'t>(&self, tape: &'t Tape) -> BoundEmbedding<'t> {
        match self {
            EmbeddingFunction::Identity => BoundEmbedding::Identity,
            EmbeddingFunction::Network(m) => BoundEmbedding::Network(m.bind(tape)),
        }
    }

    pub fn embed_tensor(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            EmbeddingFunction::Identity => Ok(x.clone()),
            EmbeddingFunction::Network(m) => m.forward_tensor(x),
        }
    }
}

pub enum BoundEmbedding<'t> {
    Identity,
    Network(BoundMlp<'t>),
}

impl<'t> BoundEmbedding<'t> {
    pub fn apply(&self, x: Var<'t>) -> Result<Var<'t>> {
        match self {
            BoundEmbedding::Identity => Ok(x),
            BoundEmbedding::Network(m) => m.forward(x),
        }
    }
}

/// `getEmbedding`: features to embeddings, row by row.
pub fn get_embedding<'t>(q: &VariableGrounding<'t>, f: &BoundEmbedding<'t>) -> Result<VariableGrounding<'t>> {
    if q.domain != Domain::Features {
        return Err(Error::contract(format!(
            "getEmbedding expects features, '{}' is {:?}",
            q.name, q.domain
        )));
    }
    VariableGrounding::new(
        format!("{}_e", q.name),
        Domain::Embeddings,
        f.apply(q.values)?,
        q.labels.clone(),
    )
}

/// Sorted distinct labels.
pub fn unique_labels(labels: &[usize]) -> Result<Vec<usize>> {
    if labels.is_empty() {
        return Err(Error::contract("unique labels of an empty sequence"));
    }
    let mut u = labels.to_vec();
    u.sort_unstable();
    u.dedup();
    Ok(u)
}

/// `L[i][j] = 1` iff support item `j` belongs to class `proto_labels[i]`.
pub fn build_label_matrix(support_labels: &[usize], proto_labels: &[usize]) -> Result<Tensor> {
    let (rows, cols) = (proto_labels.len(), support_labels.len());
    let mut data = vec![0.0; rows * cols];
    for (j, l) in support_labels.iter().enumerate() {
        let i = proto_labels
            .iter()
            .position(|p| p == l)
            .ok_or(Error::MissingPrototype { label: *l })?;
        data[i * cols + j] = 1.0;
    }
    Tensor::matrix(rows, cols, data)
}

/// Few-shot `getPrototypes`: `p = Diag(L 1)^-1 L f(x)`.
///
/// Each prototype is the mean embedding of its class's support items, so
/// unbalanced supports are handled directly.
pub fn get_prototypes_fsl<'t>(support: &VariableGrounding<'t>, f: &BoundEmbedding<'t>) -> Result<PrototypeSet<'t>> {
    if support.domain != Domain::Features {
        return Err(Error::contract("getPrototypes expects support features"));
    }
    let labels = support
        .labels
        .as_deref()
        .ok_or_else(|| Error::contract("support set needs labels"))?;
    let tape = support.values.tape();
    let proto_labels = unique_labels(labels)?;
    let l = build_label_matrix(labels, &proto_labels)?;
    let k = proto_labels.len();
    let mut inv_counts = Tensor::zeros(vec![k, k])?;
    for i in 0..k {
        let count: f64 = l.row(i).iter().sum();
        inv_counts.data_mut()[i * k + i] = 1.0 / count;
    }
    let embedded = f.apply(support.values)?;
    let p = tape
        .constant(inv_counts)
        .matmul(tape.constant(l).matmul(embedded)?)?;
    PrototypeSet::new(p, proto_labels)
}

/// Zero-shot `getPrototypes`: `p_n = g(a_n)`, one attribute row per class.
pub fn get_prototypes_zsl<'t>(attributes: Var<'t>, class_labels: &[usize], g: &BoundMlp<'t>) -> Result<PrototypeSet<'t>> {
    let shape = attributes.shape();
    if shape.len() != 2 || shape[0] != class_labels.len() {
        return Err(Error::dim(format!(
            "{} class labels for attribute matrix {shape:?}",
            class_labels.len()
        )));
    }
    let sorted = unique_labels(class_labels)?;
    if sorted.len() != class_labels.len() {
        return Err(Error::contract("duplicate class labels"));
    }
    let attributes = if sorted == class_labels {
        attributes
    } else {
        // Reorder rows into ascending label order with a permutation matrix.
        let n = sorted.len();
        let mut perm = Tensor::zeros(vec![n, n])?;
        for (i, l) in sorted.iter().enumerate() {
            let j = class_labels.iter().position(|c| c == l).expect("label present");
            perm.data_mut()[i * n + j] = 1.0;
        }
        attributes.tape().constant(perm).matmul(attributes)?
    };
    PrototypeSet::new(g.forward(attributes)?, sorted)
}

/// `isOfClass(q, p) = exp(-alpha d(q, p)^2)` for every query/prototype pair.
pub fn is_of_class<'t>(qe: Var<'t>, protos: &PrototypeSet<'t>, alpha: f64) -> Result<Truths<'t>> {
    is_of_class_values(qe, protos.prototypes(), alpha)
}

pub(crate) fn is_of_class_values<'t>(qe: Var<'t>, protos: Var<'t>, alpha: f64) -> Result<Truths<'t>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::contract(format!("alpha must be positive, got {alpha}")));
    }
    let log = qe.pairwise_sq_dist(protos)?.scale(-alpha);
    Ok(Truths::with_logs(log.exp(), log))
}

/// Parametric `isOfClass(q, p) = sigmoid(mlp([q, p]))`.
pub fn is_of_class_parametric<'t>(qe: Var<'t>, protos: &PrototypeSet<'t>, mlp: &BoundMlp<'t>) -> Result<Truths<'t>> {
    is_of_class_parametric_values(qe, protos.prototypes(), mlp)
}

pub(crate) fn is_of_class_parametric_values<'t>(qe: Var<'t>, protos: Var<'t>, mlp: &BoundMlp<'t>) -> Result<Truths<'t>> {
    let (qs, ps) = (qe.shape(), protos.shape());
    if qs.len() != 2 || ps.len() != 2 || qs[1] != ps[1] {
        return Err(Error::contract(format!("query {qs:?} and prototype {ps:?} widths differ")));
    }
    if mlp.input_dim() != 2 * qs[1] || mlp.output_dim() != 1 {
        return Err(Error::contract(format!(
            "relation head must map {} -> 1, got {} -> {}",
            2 * qs[1],
            mlp.input_dim(),
            mlp.output_dim()
        )));
    }
    let scores = mlp.forward(qe.pair_concat(protos)?)?.sigmoid();
    Ok(Truths::new(scores.reshape(vec![qs[0], ps[0]])?))
}
