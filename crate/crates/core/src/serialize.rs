//! Text formats for operators and word coefficients.
//!
//! Operators are JSON:
//! `{"blocks":[{"dim":2,"mass":1.0,"entries":[[re,im],…]}]}` with entries
//! row-major. Word coefficients are a whitespace table: a header line
//! `n d m`, then for each word in lexicographic order its `m` rows, each
//! row `m` pairs `re im`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat, C64};
use crate::tracial::{Operator, TracialAlgebra};
use crate::words::WordCoefficients;

#[derive(Serialize, Deserialize)]
struct BlockDto {
    dim: usize,
    mass: f64,
    entries: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct OperatorDto {
    blocks: Vec<BlockDto>,
}

fn row_major(m: &Mat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push([m[(i, j)].re, m[(i, j)].im]);
        }
    }
    out
}

pub fn operator_to_json(x: &Operator) -> String {
    let blocks = x
        .algebra()
        .blocks()
        .iter()
        .zip(x.blocks())
        .map(|(b, m)| BlockDto { dim: b.dim, mass: b.mass, entries: row_major(m) })
        .collect();
    serde_json::to_string(&OperatorDto { blocks }).expect("plain data serializes")
}

pub fn operator_from_json(text: &str) -> Result<Operator> {
    let dto: OperatorDto = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let algebra = TracialAlgebra::new(dto.blocks.iter().map(|b| (b.dim, b.mass)))?;
    let mut mats = Vec::with_capacity(dto.blocks.len());
    for (i, b) in dto.blocks.iter().enumerate() {
        if b.entries.len() != b.dim * b.dim {
            return Err(Error::Parse(format!("block {i}: {} entries for dimension {}", b.entries.len(), b.dim)));
        }
        mats.push(Mat::from_fn(b.dim, b.dim, |r, c| {
            let [re, im] = b.entries[r * b.dim + c];
            C64::new(re, im)
        }));
    }
    Operator::new(algebra, mats)
}

pub fn words_to_table(x: &WordCoefficients) -> String {
    let mut out = format!("{} {} {}\n", x.n(), x.d(), x.m());
    for coeff in x.coefficients() {
        for i in 0..coeff.nrows() {
            let row: Vec<String> = (0..coeff.ncols()).map(|j| format!("{} {}", coeff[(i, j)].re, coeff[(i, j)].im)).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn words_from_table(text: &str) -> Result<WordCoefficients> {
    let mut tokens = text.split_whitespace();
    let mut header = [0usize; 3];
    for (slot, name) in header.iter_mut().zip(["n", "d", "m"]) {
        let tok = tokens.next().ok_or_else(|| Error::Parse(format!("missing header field {name}")))?;
        *slot = tok.parse().map_err(|_| Error::Parse(format!("header field {name}: {tok:?}")))?;
    }
    let [n, d, m] = header;
    let words = n.checked_pow(d as u32).ok_or_else(|| Error::Parse("n^d overflows".into()))?;
    let values: Vec<f64> = tokens
        .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {t:?}"))))
        .collect::<Result<_>>()?;
    if values.len() != words * m * m * 2 {
        return Err(Error::Parse(format!("expected {} numbers after the header, got {}", words * m * m * 2, values.len())));
    }
    let data = values
        .chunks(m * m * 2)
        .map(|w| Mat::from_fn(m, m, |i, j| C64::new(w[2 * (i * m + j)], w[2 * (i * m + j) + 1])))
        .collect();
    WordCoefficients::new(n, d, m, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn operator_round_trip() {
        let alg = TracialAlgebra::new([(2, 0.25), (1, 0.75)]).unwrap();
        let x = Operator::new(
            alg,
            vec![Mat::from_fn(2, 2, |i, j| C64::new(i as f64 + 0.1, j as f64 - 1.0 / 3.0)), Mat::from_element(1, 1, C64::new(-2.5, 0.0))],
        )
        .unwrap();
        let y = operator_from_json(&operator_to_json(&x)).unwrap();
        assert_eq!(y.algebra(), x.algebra());
        assert_eq!(y.blocks(), x.blocks());
    }

    #[test]
    fn word_table_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = WordCoefficients::random(2, 2, 2, &mut rng).unwrap();
        let text = words_to_table(&x);
        assert!(text.starts_with("2 2 2\n"));
        assert_eq!(words_from_table(&text).unwrap(), x);
    }

    #[test]
    fn malformed_input() {
        assert!(matches!(words_from_table("2 1"), Err(Error::Parse(_))));
        assert!(matches!(words_from_table("1 1 1\n1.0"), Err(Error::Parse(_))));
        assert!(matches!(operator_from_json("{\"blocks\":[{\"dim\":2,\"mass\":1,\"entries\":[]}]}"), Err(Error::Parse(_))));
    }
}
