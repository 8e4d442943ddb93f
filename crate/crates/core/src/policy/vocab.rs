use crate::error::{Error, Result};

/// Character vocabulary: newline, the 95 printable ASCII characters, then the
/// three specials. Ids are dense in `0..Vocab::SIZE`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Vocab;

impl Vocab {
    pub const SYMBOLS: usize = 96;
    pub const BOS: u32 = 96;
    pub const EOS: u32 = 97;
    pub const PAD: u32 = 98;
    pub const SIZE: usize = 99;

    pub fn symbols() -> impl Iterator<Item = char> {
        std::iter::once('\n').chain((0x20u8..=0x7e).map(char::from))
    }

    pub fn token(c: char) -> Option<u32> {
        match c {
            '\n' => Some(0),
            ' '..='~' => Some(c as u32 - 0x20 + 1),
            _ => None,
        }
    }

    pub fn symbol(id: u32) -> Option<char> {
        match id {
            0 => Some('\n'),
            1..=95 => char::from_u32(id - 1 + 0x20),
            _ => None,
        }
    }

    pub fn is_special(id: u32) -> bool {
        (Self::BOS..Self::SIZE as u32).contains(&id)
    }

    pub fn encode(text: &str) -> Result<Vec<u32>> {
        text.chars()
            .map(|c| Self::token(c).ok_or(Error::UnknownSymbol(c)))
            .collect()
    }

    /// `BOS` followed by the encoded prompt.
    pub fn encode_prompt(text: &str) -> Result<Vec<u32>> {
        let mut tokens = Vec::with_capacity(text.len() + 1);
        tokens.push(Self::BOS);
        tokens.extend(Self::encode(text)?);
        Ok(tokens)
    }

    /// Encodes a finished completion: its characters followed by `EOS`.
    pub fn encode_completion(text: &str) -> Result<Vec<u32>> {
        let mut tokens = Self::encode(text)?;
        tokens.push(Self::EOS);
        Ok(tokens)
    }

    /// Special tokens decode to nothing.
    pub fn decode(tokens: &[u32]) -> String {
        tokens.iter().filter_map(|&t| Self::symbol(t)).collect()
    }

    pub fn check(tokens: &[u32]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= Self::SIZE) {
            Some(&t) => Err(Error::TokenOutOfRange(t)),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate, Specialty};

    #[test]
    fn symbol_table_is_dense_and_ordered() {
        let symbols: Vec<char> = Vocab::symbols().collect();
        assert_eq!(symbols.len(), Vocab::SYMBOLS);
        for (i, c) in symbols.iter().enumerate() {
            assert_eq!(Vocab::token(*c), Some(i as u32));
            assert_eq!(Vocab::symbol(i as u32), Some(*c));
        }
        assert_eq!(Vocab::symbol(Vocab::EOS), None);
    }

    #[test]
    fn rejects_non_ascii() {
        assert!(matches!(Vocab::encode("héllo"), Err(Error::UnknownSymbol('é'))));
        assert!(Vocab::encode("tab\there").is_err());
    }

    #[test]
    fn every_task_encodes() {
        for specialty in Specialty::all_default() {
            for d in specialty.id().difficulty_bounds().0..=specialty.id().difficulty_bounds().1 {
                let s = Specialty::new(specialty.id(), d).unwrap();
                for seed in 0..200 {
                    let q = generate(s, seed);
                    Vocab::encode(&q.prompt).unwrap();
                    Vocab::encode(&q.ground_truth).unwrap();
                }
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn decode_inverts_encode(text in "[ -~\n]{0,200}") {
            let tokens = Vocab::encode(&text).unwrap();
            proptest::prop_assert_eq!(Vocab::decode(&tokens), text);
        }
    }
}
