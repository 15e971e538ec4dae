//! Backward linear bound propagation.
//!
//! Each hidden neuron `σ(z)` is replaced by its relaxation lines and the
//! bound of a target linear form is carried back to the input layer, picking
//! the lower or upper line per coefficient sign. The resulting linear
//! function of `x` is minimised or maximised exactly over the input box.

use ndarray::{Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;
use crate::relaxation::{relax, DomainPair, NeuronRelaxation, Strategy};
use crate::under_approx::{self, UnderDomains};

pub use crate::under_approx::UnderMethod;

/// Axis-aligned input region: the ℓ∞ ball around `x0` clipped to the
/// network's declared input range.
#[derive(Debug, Clone, PartialEq)]
pub struct InputBox {
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
}

impl InputBox {
    pub fn linf_ball(x0: &[f64], eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidConfig(format!("radius {eps} must be finite and >= 0")));
        }
        if x0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("input".into()));
        }
        Ok(Self {
            lower: x0.iter().map(|v| v - eps).collect(),
            upper: x0.iter().map(|v| v + eps).collect(),
        })
    }

    pub fn for_network(net: &Network, x0: &[f64], eps: f64) -> Result<Self> {
        if x0.len() != net.input_dim() {
            return Err(Error::Dimension {
                expected: net.input_dim(),
                got: x0.len(),
            });
        }
        let mut region = Self::linf_ball(x0, eps)?;
        if let Some((lo, hi)) = net.input_range() {
            if x0.iter().any(|v| *v < lo || *v > hi) {
                return Err(Error::InvalidConfig(format!(
                    "input lies outside the declared range [{lo}, {hi}]"
                )));
            }
            region.lower.mapv_inplace(|v| v.max(lo));
            region.upper.mapv_inplace(|v| v.min(hi));
        }
        Ok(region)
    }

    pub fn center(&self) -> Array1<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn radius(&self) -> Array1<f64> {
        (&self.upper - &self.lower) * 0.5
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.lower.len()
            && x
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(v, (lo, hi))| lo <= v && v <= hi)
    }
}

/// Linear functions of the input bounding a vector of targets:
/// `lower_coeffs·x + lower_const <= f(x) <= upper_coeffs·x + upper_const`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolicBound {
    pub lower_coeffs: Array2<f64>,
    pub lower_const: Array1<f64>,
    pub upper_coeffs: Array2<f64>,
    pub upper_const: Array1<f64>,
}

impl SymbolicBound {
    /// Concrete bounds over `region`.
    pub fn concretize(&self, region: &InputBox) -> LayerDomains {
        LayerDomains {
            lower: minimize(&self.lower_coeffs, &self.lower_const, region),
            upper: maximize(&self.upper_coeffs, &self.upper_const, region),
        }
    }

    /// Concrete bounds over the unclipped ℓ∞ ball, `A·x0 + c ∓ ε‖A‖₁`.
    pub fn concretize_linf(&self, x0: &[f64], eps: f64) -> Result<LayerDomains> {
        Ok(self.concretize(&InputBox::linf_ball(x0, eps)?))
    }
}

fn minimize(coeffs: &Array2<f64>, consts: &Array1<f64>, region: &InputBox) -> Array1<f64> {
    coeffs.dot(&region.center()) + consts - coeffs.mapv(f64::abs).dot(&region.radius())
}

fn maximize(coeffs: &Array2<f64>, consts: &Array1<f64>, region: &InputBox) -> Array1<f64> {
    coeffs.dot(&region.center()) + consts + coeffs.mapv(f64::abs).dot(&region.radius())
}

/// Concrete pre-activation bounds of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDomains {
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
}

impl LayerDomains {
    pub fn width(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, other: &LayerDomains, tol: f64) -> bool {
        self.lower.iter().zip(&other.lower).all(|(a, b)| *a <= b + tol)
            && self.upper.iter().zip(&other.upper).all(|(a, b)| *a >= b - tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagationConfig {
    pub strategy: Strategy,
    pub under_method: UnderMethod,
}

impl PropagationConfig {
    pub fn new(strategy: Strategy, under_method: UnderMethod) -> Self {
        Self {
            strategy,
            under_method,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategy == Strategy::Dual && self.under_method == UnderMethod::None {
            return Err(Error::InvalidConfig(
                "the dual strategy needs an under-approximation method".into(),
            ));
        }
        Ok(())
    }
}

/// Everything computed for one input and radius.
#[derive(Debug, Clone)]
pub struct Propagation {
    pub region: InputBox,
    /// Pre-activation bounds of every layer, output layer included.
    pub domains: Vec<LayerDomains>,
    /// Relaxations of every hidden layer.
    pub relaxations: Vec<Vec<NeuronRelaxation>>,
    pub under: Option<UnderDomains>,
    /// Neurons whose requested construction fell back to parallel lines.
    pub fallbacks: usize,
}

/// Lower margin bound `y_label - y_other` for one competing class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginBound {
    pub other: usize,
    pub lower: f64,
}

/// Carries `coeffs·ẑ_post + consts` back to the input, where `ẑ_post` is
/// the post-activation of layer `post` (`None` means the input itself).
fn substitute(
    net: &Network,
    relaxations: &[Vec<NeuronRelaxation>],
    mut coeffs: Array2<f64>,
    mut consts: Array1<f64>,
    post: Option<usize>,
    lower: bool,
) -> (Array2<f64>, Array1<f64>) {
    let mut layer = post;
    while let Some(j) = layer {
        for (mut row, c) in coeffs.axis_iter_mut(Axis(0)).zip(consts.iter_mut()) {
            for (a, rel) in row.iter_mut().zip(&relaxations[j]) {
                let line = if (*a >= 0.0) == lower { rel.lower } else { rel.upper };
                *c += *a * line.intercept;
                *a *= line.slope;
            }
        }
        let affine = net.layers()[j].affine();
        consts += &coeffs.dot(&affine.bias);
        coeffs = coeffs.dot(&affine.weights);
        layer = j.checked_sub(1);
    }
    (coeffs, consts)
}

/// Symbolic bound of `coeffs·ẑ_post + consts` given relaxations of layers
/// `0..=post`.
pub fn bound_linear_form(
    net: &Network,
    relaxations: &[Vec<NeuronRelaxation>],
    coeffs: Array2<f64>,
    consts: Array1<f64>,
    post: Option<usize>,
) -> SymbolicBound {
    let (lower_coeffs, lower_const) =
        substitute(net, relaxations, coeffs.clone(), consts.clone(), post, true);
    let (upper_coeffs, upper_const) = substitute(net, relaxations, coeffs, consts, post, false);
    SymbolicBound {
        lower_coeffs,
        lower_const,
        upper_coeffs,
        upper_const,
    }
}

/// Pre-activation bounds of `layer` over `region`, using the supplied
/// relaxations for layers `0..layer`.
pub fn bound_layer(
    net: &Network,
    region: &InputBox,
    relaxations: &[Vec<NeuronRelaxation>],
    layer: usize,
) -> Result<(SymbolicBound, LayerDomains)> {
    if layer >= net.num_layers() {
        return Err(Error::OutOfRange { layer, neuron: 0 });
    }
    if relaxations.len() < layer {
        return Err(Error::InvalidConfig(format!(
            "bounding layer {layer} needs relaxations for {layer} layers, got {}",
            relaxations.len()
        )));
    }
    let affine = net.layers()[layer].affine();
    let sym = bound_linear_form(
        net,
        relaxations,
        affine.weights.clone(),
        affine.bias.clone(),
        layer.checked_sub(1),
    );
    let dom = sym.concretize(region);
    check_finite(&dom, layer)?;
    Ok((sym, dom))
}

fn check_finite(dom: &LayerDomains, layer: usize) -> Result<()> {
    if dom.lower.iter().chain(dom.upper.iter()).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("bounds of layer {layer}")))
    }
}

/// Over-approximated domains and relaxations for every layer.
pub fn compute_domains(
    net: &Network,
    x0: &[f64],
    eps: f64,
    cfg: &PropagationConfig,
) -> Result<Propagation> {
    cfg.validate()?;
    let region = InputBox::for_network(net, x0, eps)?;
    let under = under_approx::compute(net, x0, &region, eps, cfg.under_method)?;
    let mut domains = Vec::with_capacity(net.num_layers());
    let mut relaxations: Vec<Vec<NeuronRelaxation>> = Vec::with_capacity(net.num_hidden());
    let mut fallbacks = 0;
    for i in 0..net.num_layers() {
        let (_, dom) = bound_layer(net, &region, &relaxations, i)?;
        if i < net.num_hidden() {
            let act = net.layers()[i].activation();
            let mut layer_relax = Vec::with_capacity(dom.width());
            for r in 0..dom.width() {
                let (l, u) = (dom.lower[r], dom.upper[r]);
                let pair = match &under {
                    Some(ud) => DomainPair::new(l, u, ud.lower[i][r], ud.upper[i][r])?,
                    None => DomainPair::collapsed(l, u)?,
                };
                let rel = relax(cfg.strategy, act, &pair);
                fallbacks += usize::from(rel.fallback);
                layer_relax.push(rel);
            }
            relaxations.push(layer_relax);
        }
        domains.push(dom);
    }
    Ok(Propagation {
        region,
        domains,
        relaxations,
        under,
        fallbacks,
    })
}

impl Propagation {
    /// Lower bounds of `y_label - y_other` for every `other != label`.
    pub fn margin_bounds(&self, net: &Network, label: usize) -> Result<Vec<MarginBound>> {
        let classes = net.num_classes();
        if label >= classes {
            return Err(Error::InvalidLabel { label, classes });
        }
        let out = net.layers().last().expect("network has layers").affine();
        let others: Vec<usize> = (0..classes).filter(|&o| o != label).collect();
        let row = |m: &Array2<f64>, o: usize| -> Array1<f64> { &m.row(label) - &m.row(o) };
        let mut coeffs = Array2::zeros((others.len(), out.weights.ncols()));
        for (k, &o) in others.iter().enumerate() {
            coeffs.row_mut(k).assign(&row(&out.weights, o));
        }
        let consts: Array1<f64> = others.iter().map(|&o| out.bias[label] - out.bias[o]).collect();
        let (lc, lk) = substitute(
            net,
            &self.relaxations,
            coeffs,
            consts,
            net.num_layers().checked_sub(2),
            true,
        );
        let lower = minimize(&lc, &lk, &self.region);
        if lower.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("margin bounds".into()));
        }
        Ok(others
            .into_iter()
            .zip(lower)
            .map(|(other, lower)| MarginBound { other, lower })
            .collect())
    }
}

/// Lower bounds of `y_label - y_other` over the perturbation region.
pub fn output_margin_bounds(
    net: &Network,
    x0: &[f64],
    eps: f64,
    label: usize,
    cfg: &PropagationConfig,
) -> Result<Vec<MarginBound>> {
    if label >= net.num_classes() {
        return Err(Error::InvalidLabel {
            label,
            classes: net.num_classes(),
        });
    }
    compute_domains(net, x0, eps, cfg)?.margin_bounds(net, label)
}

/// Smallest entry, `+∞` when empty.
pub fn min_margin(bounds: &[MarginBound]) -> f64 {
    bounds.iter().map(|m| m.lower).fold(f64::INFINITY, f64::min)
}
