//! Naive index contraction over dense tensors.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Dense row-major tensor of complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<C64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor { shape: shape.to_vec(), data: vec![C64::new(0.0, 0.0); shape.iter().product()] }
    }

    pub fn from_fn(shape: &[usize], f: impl Fn(&[usize]) -> C64) -> Self {
        let mut t = Tensor::zeros(shape);
        let mut idx = vec![0; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&idx);
            advance(&mut idx, shape);
        }
        t
    }

    pub fn from_vec(shape: &[usize], data: Vec<C64>) -> Result<Self> {
        if data.len() != shape.iter().product::<usize>() {
            return Err(Error::ArityMismatch(format!("{} entries for shape {:?}", data.len(), shape)));
        }
        Ok(Tensor { shape: shape.to_vec(), data })
    }

    pub fn real(shape: &[usize], data: &[f64]) -> Result<Self> {
        Tensor::from_vec(shape, data.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    fn offset(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.shape).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn get(&self, idx: &[usize]) -> C64 {
        self.data[self.offset(idx)]
    }

    pub fn conj(&self) -> Tensor {
        Tensor { shape: self.shape.clone(), data: self.data.iter().map(|z| z.conj()).collect() }
    }

    /// The single entry of a rank-0 tensor.
    pub fn scalar(&self) -> C64 {
        self.data[0]
    }
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            return;
        }
        idx[a] = 0;
    }
}

fn parse_labels(s: &str) -> Result<Vec<char>> {
    let labels: Vec<char> = s.trim().chars().collect();
    if let Some(c) = labels.iter().find(|c| !c.is_ascii_alphabetic()) {
        return Err(Error::ArityMismatch(format!("invalid index label {c:?}")));
    }
    Ok(labels)
}

/// Evaluate an index expression such as `"jk,kjl->l"` by looping over every
/// combination of index values. Repeated labels not in the output are summed.
pub fn brute_contract(spec: &str, tensors: &[&Tensor]) -> Result<Tensor> {
    let (lhs, rhs) = spec
        .split_once("->")
        .ok_or_else(|| Error::ArityMismatch(format!("missing '->' in {spec:?}")))?;
    let inputs: Vec<Vec<char>> = lhs.split(',').map(parse_labels).collect::<Result<_>>()?;
    let output = parse_labels(rhs)?;
    if inputs.len() != tensors.len() {
        return Err(Error::ArityMismatch(format!("{} operands for {} tensors", inputs.len(), tensors.len())));
    }
    let mut labels: Vec<char> = Vec::new();
    let mut dims: Vec<usize> = Vec::new();
    for (k, (lab, t)) in inputs.iter().zip(tensors).enumerate() {
        if lab.len() != t.rank() {
            return Err(Error::ArityMismatch(format!("operand {k} has rank {} but {} labels", t.rank(), lab.len())));
        }
        for (&c, &n) in lab.iter().zip(&t.shape) {
            match labels.iter().position(|&l| l == c) {
                Some(i) if dims[i] != n => {
                    return Err(Error::ArityMismatch(format!("index {c} has extents {} and {n}", dims[i])));
                }
                Some(_) => {}
                None => {
                    labels.push(c);
                    dims.push(n);
                }
            }
        }
    }
    let mut out_pos = Vec::with_capacity(output.len());
    for (i, c) in output.iter().enumerate() {
        if output[..i].contains(c) {
            return Err(Error::ArityMismatch(format!("output index {c} repeated")));
        }
        out_pos.push(
            labels
                .iter()
                .position(|l| l == c)
                .ok_or_else(|| Error::ArityMismatch(format!("output index {c} not in any operand")))?,
        );
    }
    let positions: Vec<Vec<usize>> =
        inputs.iter().map(|lab| lab.iter().map(|c| labels.iter().position(|l| l == c).unwrap()).collect()).collect();
    let out_shape: Vec<usize> = out_pos.iter().map(|&i| dims[i]).collect();
    let mut out = Tensor::zeros(&out_shape);
    let total: usize = dims.iter().product();
    let mut idx = vec![0; labels.len()];
    let mut sub = Vec::new();
    for _ in 0..total {
        let mut prod = C64::new(1.0, 0.0);
        for (t, pos) in tensors.iter().zip(&positions) {
            sub.clear();
            sub.extend(pos.iter().map(|&i| idx[i]));
            prod *= t.get(&sub);
            if prod == C64::new(0.0, 0.0) {
                break;
            }
        }
        sub.clear();
        sub.extend(out_pos.iter().map(|&i| idx[i]));
        let o = out.offset(&sub);
        out.data[o] += prod;
        advance(&mut idx, &dims);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn matrix_product_and_trace() {
        let a = Tensor::real(&[2, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::real(&[2, 2], &[0.0, 1.0, 1.0, 0.0]).unwrap();
        let ab = brute_contract("ij,jk->ik", &[&a, &b]).unwrap();
        assert_eq!(ab.data, vec![c(2.0), c(1.0), c(4.0), c(3.0)]);
        assert_eq!(brute_contract("ii->", &[&a]).unwrap().scalar(), c(5.0));
    }

    #[test]
    fn inverse_contracted_with_metric_gives_dimension() {
        let g = Tensor::real(&[3, 3], &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 4.0]).unwrap();
        let det = 2.0 * 4.0 - 0.25 * 4.0;
        let inv = Tensor::real(&[3, 3], &[4.0 / det, -2.0 / det, 0.0, -2.0 / det, 8.0 / det, 0.0, 0.0, 0.0, 0.25]).unwrap();
        let tr = brute_contract("jk,kj->", &[&inv, &g]).unwrap().scalar();
        assert!((tr - c(3.0)).norm() < 1e-14);
    }

    #[test]
    fn delta_contraction_is_trace() {
        let delta = Tensor::from_fn(&[3, 3], |i| c(if i[0] == i[1] { 1.0 } else { 0.0 }));
        let a = Tensor::from_fn(&[3, 3], |i| c((i[0] * 3 + i[1]) as f64));
        assert_eq!(brute_contract("ij,ij->", &[&delta, &a]).unwrap().scalar(), c(12.0));
    }

    #[test]
    fn arity_errors() {
        let a = Tensor::zeros(&[2, 2]);
        let b = Tensor::zeros(&[3]);
        assert!(matches!(brute_contract("ij,j->i", &[&a]), Err(Error::ArityMismatch(_))));
        assert!(matches!(brute_contract("ijk->i", &[&a]), Err(Error::ArityMismatch(_))));
        assert!(matches!(brute_contract("ij,j->i", &[&a, &b]), Err(Error::ArityMismatch(_))));
        assert!(matches!(brute_contract("ij->k", &[&a]), Err(Error::ArityMismatch(_))));
        assert!(matches!(brute_contract("ij->ii", &[&a]), Err(Error::ArityMismatch(_))));
        assert!(matches!(brute_contract("ij", &[&a]), Err(Error::ArityMismatch(_))));
    }

    #[test]
    fn outer_product_and_transpose() {
        let v = Tensor::real(&[2], &[1.0, 2.0]).unwrap();
        let w = Tensor::real(&[3], &[1.0, 0.0, -1.0]).unwrap();
        let o = brute_contract("a,b->ba", &[&v, &w]).unwrap();
        assert_eq!(o.shape, vec![3, 2]);
        assert_eq!(o.get(&[2, 1]), c(-2.0));
    }
}
