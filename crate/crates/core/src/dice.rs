//! Single-term dice notation for monster quantities: `N`, `NdM`, `NdM+K`, `NdM-K`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {offset}: {message}")]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
}

impl ParseError {
    fn new(offset: usize, message: impl Into<String>) -> Self {
        Self {
            offset,
            message: message.into(),
        }
    }
}

/// A quantity expression. The minimum value is never negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DiceExpr {
    Constant(u32),
    Dice {
        count: u32,
        sides: u32,
        modifier: i32,
    },
}

impl DiceExpr {
    pub fn dice(count: u32, sides: u32, modifier: i32) -> Result<Self, ParseError> {
        if count == 0 {
            return Err(ParseError::new(0, "dice count must be at least 1"));
        }
        if sides == 0 {
            return Err(ParseError::new(0, "dice must have at least 1 side"));
        }
        let expr = DiceExpr::Dice {
            count,
            sides,
            modifier,
        };
        if expr.min() < 0 {
            return Err(ParseError::new(
                0,
                format!("minimum value {} is negative", expr.min()),
            ));
        }
        Ok(expr)
    }

    pub fn min(&self) -> i64 {
        match *self {
            DiceExpr::Constant(n) => n as i64,
            DiceExpr::Dice {
                count, modifier, ..
            } => count as i64 + modifier as i64,
        }
    }

    pub fn max(&self) -> i64 {
        match *self {
            DiceExpr::Constant(n) => n as i64,
            DiceExpr::Dice {
                count,
                sides,
                modifier,
            } => count as i64 * sides as i64 + modifier as i64,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.min() + self.max()) as f64 / 2.0
    }

    pub fn roll<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        match *self {
            DiceExpr::Constant(n) => n as i64,
            DiceExpr::Dice {
                count,
                sides,
                modifier,
            } => {
                let total: i64 = (0..count).map(|_| rng.random_range(1..=sides) as i64).sum();
                total + modifier as i64
            }
        }
    }
}

pub fn parse_dice(text: &str) -> Result<DiceExpr, ParseError> {
    Parser::new(text).parse()
}

pub fn roll_dice<R: Rng + ?Sized>(expr: &DiceExpr, rng: &mut R) -> i64 {
    expr.roll(rng)
}

impl fmt::Display for DiceExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DiceExpr::Constant(n) => write!(f, "{n}"),
            DiceExpr::Dice {
                count,
                sides,
                modifier,
            } => {
                write!(f, "{count}d{sides}")?;
                match modifier {
                    0 => Ok(()),
                    m if m > 0 => write!(f, "+{m}"),
                    m => write!(f, "-{}", m.unsigned_abs()),
                }
            }
        }
    }
}

impl FromStr for DiceExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_dice(s)
    }
}

impl Serialize for DiceExpr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DiceExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u32),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Int(n) => Ok(DiceExpr::Constant(n)),
            Raw::Text(s) => parse_dice(&s).map_err(serde::de::Error::custom),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn peek(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while let Some(c) = self.src[self.pos..].chars().next() {
            if !c.is_whitespace() {
                break;
            }
            self.pos += c.len_utf8();
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ParseError> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ParseError::new(start, format!("expected {what}")));
        }
        self.src[start..self.pos]
            .parse()
            .map_err(|_| ParseError::new(start, format!("{what} is too large")))
    }

    fn parse(mut self) -> Result<DiceExpr, ParseError> {
        self.skip_ws();
        if self.pos == self.src.len() {
            return Err(ParseError::new(
                self.pos,
                "expected a number or dice expression",
            ));
        }
        let count_at = self.pos;
        let count = self.number("dice count or constant")?;
        if !matches!(self.peek(), Some(b'd' | b'D')) {
            self.skip_ws();
            return match self.peek() {
                None => Ok(DiceExpr::Constant(count)),
                Some(_) => Err(ParseError::new(self.pos, "expected 'd' or end of input")),
            };
        }
        self.pos += 1;
        let sides_at = self.pos;
        let sides = self.number("number of sides")?;
        if count == 0 {
            return Err(ParseError::new(count_at, "dice count must be at least 1"));
        }
        if sides == 0 {
            return Err(ParseError::new(sides_at, "dice must have at least 1 side"));
        }
        self.skip_ws();
        let modifier = match self.peek() {
            None => 0,
            Some(sign @ (b'+' | b'-')) => {
                self.pos += 1;
                self.skip_ws();
                let value_at = self.pos;
                let value = self.number("modifier")?;
                let value = i32::try_from(value)
                    .map_err(|_| ParseError::new(value_at, "modifier is too large"))?;
                self.skip_ws();
                if self.peek().is_some() {
                    return Err(ParseError::new(self.pos, "expected end of input"));
                }
                if sign == b'-' {
                    -value
                } else {
                    value
                }
            }
            Some(_) => {
                return Err(ParseError::new(
                    self.pos,
                    "expected '+', '-' or end of input",
                ))
            }
        };
        DiceExpr::dice(count, sides, modifier).map_err(|e| ParseError::new(count_at, e.message))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn parses_accepted_forms() {
        assert_eq!(
            parse_dice("1d1").unwrap(),
            DiceExpr::Dice {
                count: 1,
                sides: 1,
                modifier: 0
            }
        );
        assert_eq!(
            parse_dice("2d6+3").unwrap(),
            DiceExpr::Dice {
                count: 2,
                sides: 6,
                modifier: 3
            }
        );
        assert_eq!(
            parse_dice(" 4D8 - 2 ").unwrap(),
            DiceExpr::Dice {
                count: 4,
                sides: 8,
                modifier: -2
            }
        );
        assert_eq!(parse_dice("12").unwrap(), DiceExpr::Constant(12));
        assert_eq!(parse_dice("0").unwrap(), DiceExpr::Constant(0));
    }

    #[test]
    fn negative_minimum_is_rejected() {
        // 3d4-5 has minimum 3 - 5 = -2
        let err = parse_dice("3d4-5").unwrap_err();
        assert!(err.message.contains("-2"), "{err}");
        assert!(parse_dice("3d4-3").is_ok());
    }

    #[test]
    fn errors_carry_offsets() {
        assert_eq!(parse_dice("").unwrap_err().offset, 0);
        assert_eq!(parse_dice("   ").unwrap_err().offset, 3);
        assert_eq!(parse_dice("2d").unwrap_err().offset, 2);
        assert_eq!(parse_dice("2x6").unwrap_err().offset, 1);
        assert_eq!(parse_dice("2d6+").unwrap_err().offset, 4);
        assert_eq!(parse_dice("2d6+1d4").unwrap_err().offset, 5);
        assert_eq!(parse_dice("d6").unwrap_err().offset, 0);
        assert_eq!(parse_dice("0d6").unwrap_err().offset, 0);
        assert_eq!(parse_dice("2d0").unwrap_err().offset, 2);
        assert!(parse_dice("99999999999").is_err());
    }

    #[test]
    fn canonical_rendering() {
        assert_eq!(parse_dice(" 2 ").unwrap().to_string(), "2");
        assert_eq!(parse_dice("2D6 + 0").unwrap().to_string(), "2d6");
        assert_eq!(parse_dice("2d6 - 1").unwrap().to_string(), "2d6-1");
        assert_eq!(parse_dice("2d6+10").unwrap().to_string(), "2d6+10");
    }

    #[test]
    fn degenerate_and_constant_rolls() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let one = parse_dice("1d1").unwrap();
        let twelve = parse_dice("12").unwrap();
        for _ in 0..100 {
            assert_eq!(roll_dice(&one, &mut rng), 1);
            assert_eq!(roll_dice(&twelve, &mut rng), 12);
        }
    }

    #[test]
    fn rolls_are_deterministic_under_seed() {
        let e = parse_dice("3d6+2").unwrap();
        let a: Vec<i64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| e.roll(&mut rng)).collect()
        };
        let b: Vec<i64> = {
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            (0..50).map(|_| e.roll(&mut rng)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn serde_accepts_integers_and_strings() {
        #[derive(Deserialize)]
        struct Q {
            q: DiceExpr,
        }
        let q: Q = toml::from_str("q = 12").unwrap();
        assert_eq!(q.q, DiceExpr::Constant(12));
        let q: Q = toml::from_str("q = \"1d4+1\"").unwrap();
        assert_eq!(q.q.to_string(), "1d4+1");
        assert!(toml::from_str::<Q>("q = \"3d4-5\"").is_err());
    }

    fn arb_expr() -> impl Strategy<Value = DiceExpr> {
        prop_oneof![
            (0u32..1000).prop_map(DiceExpr::Constant),
            (1u32..50, 1u32..100, -50i32..50)
                .prop_filter_map("negative min", |(c, s, m)| { DiceExpr::dice(c, s, m).ok() }),
        ]
    }

    proptest! {
        #[test]
        fn render_then_parse_is_identity(e in arb_expr()) {
            let rendered = e.to_string();
            let reparsed = parse_dice(&rendered).unwrap();
            prop_assert_eq!(reparsed, e);
            prop_assert_eq!(reparsed.to_string(), rendered);
        }

        #[test]
        fn parse_render_parse_is_idempotent(
            c in 1u32..20, s in 1u32..20, m in -5i32..30,
            upper in any::<bool>(), spaces in any::<bool>()
        ) {
            let d = if upper { "D" } else { "d" };
            let sp = if spaces { " " } else { "" };
            let text = match m {
                0 => format!("{sp}{c}{d}{s}{sp}"),
                m if m > 0 => format!("{c}{d}{s}{sp}+{sp}{m}"),
                m => format!("{c}{d}{s}{sp}-{sp}{}", -m),
            };
            if let Ok(first) = parse_dice(&text) {
                prop_assert_eq!(parse_dice(&first.to_string()).unwrap(), first);
            } else {
                prop_assert!(c as i64 + (m as i64) < 0);
            }
        }

        #[test]
        fn rolls_stay_within_bounds(e in arb_expr(), seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..20 {
                let v = e.roll(&mut rng);
                prop_assert!(v >= e.min() && v <= e.max());
                prop_assert!(v >= 0);
            }
        }
    }
}
