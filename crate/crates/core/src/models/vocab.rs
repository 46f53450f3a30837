use crate::cellspace::{CellId, Token};
use crate::error::{Error, Result};

/// Dense token indices: `#start` is 0, `#end` is 1 and cell `k` is `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Vocab {
    n_cells: usize,
}

pub const START_INDEX: usize = 0;
pub const END_INDEX: usize = 1;

impl Vocab {
    pub fn new(n_cells: usize) -> Self {
        Self { n_cells }
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn len(&self) -> usize {
        self.n_cells + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, token: Token) -> Result<usize> {
        match token {
            Token::Start => Ok(START_INDEX),
            Token::End => Ok(END_INDEX),
            Token::Cell(c) if c.0 >= 1 && (c.0 as usize) <= self.n_cells => Ok(c.0 as usize + 1),
            Token::Cell(c) => Err(Error::UnknownCell(c.0)),
        }
    }

    pub fn indices(&self, tokens: &[Token]) -> Result<Vec<usize>> {
        tokens.iter().map(|&t| self.index(t)).collect()
    }

    pub fn token(&self, index: usize) -> Result<Token> {
        match index {
            START_INDEX => Ok(Token::Start),
            END_INDEX => Ok(Token::End),
            i if i < self.len() => Ok(Token::Cell(CellId((i - 1) as u32))),
            i => Err(Error::LabelOutOfRange {
                label: i,
                size: self.len(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let v = Vocab::new(3);
        assert_eq!(v.len(), 5);
        for i in 0..5 {
            assert_eq!(v.index(v.token(i).unwrap()).unwrap(), i);
        }
        assert!(v.index(Token::Cell(CellId(4))).is_err());
        assert!(v.index(Token::Cell(CellId(0))).is_err());
        assert!(v.token(5).is_err());
    }
}
