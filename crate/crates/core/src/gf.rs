//! Arithmetic over GF(2^w), 1 <= w <= 16.
//!
//! A [`Field`] is built from a width and a reduction polynomial given as a
//! bitmask that includes the leading `x^w` term (so GF(2^8) with
//! x^8 + x^4 + x^3 + x + 1 is `0x11b`). Symbols are plain `u16` values in
//! `[0, 2^w)`. Addition is XOR. For w <= 12 multiplication goes through
//! log/antilog tables built at construction; wider fields fall back to a
//! carry-less multiply followed by polynomial reduction.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

/// A field element. Valid values are `0..field.order()`.
pub type Symbol = u16;

/// Widest field with precomputed log/antilog tables.
pub const MAX_TABLE_WIDTH: u32 = 12;

pub const DEFAULT_WIDTH: u32 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GfError {
    #[error("field width {0} is outside 1..=16")]
    UnsupportedWidth(u32),
    #[error("polynomial {poly:#x} is not an irreducible polynomial of degree {width}")]
    Reducible { width: u32, poly: u32 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("value {value} is not an element of a field of order {order}")]
    OutOfRange { value: u32, order: u32 },
}

struct Tables {
    log: Vec<u16>,
    // exp is doubled so exp[log a + log b] never needs a modulo.
    exp: Vec<u16>,
}

struct Inner {
    width: u32,
    poly: u32,
    tables: Option<Tables>,
}

/// An immutable GF(2^w) context. Cloning is cheap.
#[derive(Clone)]
pub struct Field {
    inner: Arc<Inner>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.width() == other.width() && self.poly() == other.poly()
    }
}

impl Eq for Field {}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("width", &self.width())
            .field("poly", &format_args!("{:#x}", self.poly()))
            .finish()
    }
}

impl Default for Field {
    fn default() -> Self {
        Field::with_width(DEFAULT_WIDTH).expect("default width is valid")
    }
}

/// Carry-less product of two polynomials over GF(2).
pub fn clmul(a: u32, b: u32) -> u32 {
    let mut acc = 0u32;
    let mut a = a;
    let mut b = b;
    while b != 0 {
        if b & 1 != 0 {
            acc ^= a;
        }
        a <<= 1;
        b >>= 1;
    }
    acc
}

fn degree(p: u32) -> i32 {
    31 - p.leading_zeros() as i32
}

/// Remainder of polynomial long division over GF(2).
pub fn poly_mod(mut a: u32, m: u32) -> u32 {
    let dm = degree(m);
    assert!(dm >= 0, "modulus must be nonzero");
    while a != 0 && degree(a) >= dm {
        a ^= m << (degree(a) - dm);
    }
    a
}

/// Brute-force irreducibility: no polynomial of degree 1..=w/2 divides `poly`.
pub fn is_irreducible(poly: u32, width: u32) -> bool {
    if !(1..=16).contains(&width) || degree(poly) != width as i32 {
        return false;
    }
    for d in 1..=width / 2 {
        for divisor in (1u32 << d)..(1u32 << (d + 1)) {
            if poly_mod(poly, divisor) == 0 {
                return false;
            }
        }
    }
    true
}

/// The numerically smallest irreducible polynomial of degree `width`.
pub fn default_poly(width: u32) -> Result<u32, GfError> {
    if !(1..=16).contains(&width) {
        return Err(GfError::UnsupportedWidth(width));
    }
    ((1u32 << width)..(1u32 << (width + 1)))
        .find(|&p| is_irreducible(p, width))
        .ok_or(GfError::UnsupportedWidth(width))
}

impl Field {
    pub fn new(width: u32, poly: u32) -> Result<Field, GfError> {
        if !(1..=16).contains(&width) {
            return Err(GfError::UnsupportedWidth(width));
        }
        if !is_irreducible(poly, width) {
            return Err(GfError::Reducible { width, poly });
        }
        let tables = (width <= MAX_TABLE_WIDTH).then(|| build_tables(width, poly));
        Ok(Field {
            inner: Arc::new(Inner {
                width,
                poly,
                tables,
            }),
        })
    }

    /// Field of the given width with the default reduction polynomial.
    pub fn with_width(width: u32) -> Result<Field, GfError> {
        Field::new(width, default_poly(width)?)
    }

    pub fn width(&self) -> u32 {
        self.inner.width
    }

    pub fn poly(&self) -> u32 {
        self.inner.poly
    }

    /// Number of elements, q = 2^w.
    pub fn order(&self) -> u32 {
        1u32 << self.inner.width
    }

    pub fn has_tables(&self) -> bool {
        self.inner.tables.is_some()
    }

    pub fn contains(&self, value: u32) -> bool {
        value < self.order()
    }

    /// Validates a raw value as an element of this field.
    pub fn element(&self, value: u32) -> Result<Symbol, GfError> {
        if self.contains(value) {
            Ok(value as Symbol)
        } else {
            Err(GfError::OutOfRange {
                value,
                order: self.order(),
            })
        }
    }

    /// Bytes needed to store one symbol.
    pub fn symbol_bytes(&self) -> usize {
        (self.inner.width as usize).div_ceil(8)
    }

    #[inline]
    pub fn add(&self, a: Symbol, b: Symbol) -> Symbol {
        a ^ b
    }

    /// Subtraction coincides with addition in characteristic 2.
    #[inline]
    pub fn sub(&self, a: Symbol, b: Symbol) -> Symbol {
        a ^ b
    }

    #[inline]
    pub fn mul(&self, a: Symbol, b: Symbol) -> Symbol {
        debug_assert!(self.contains(a as u32) && self.contains(b as u32));
        if a == 0 || b == 0 {
            return 0;
        }
        match &self.inner.tables {
            Some(t) => t.exp[t.log[a as usize] as usize + t.log[b as usize] as usize],
            None => self.mul_slow(a, b),
        }
    }

    /// Reference multiply: carry-less product reduced by the field polynomial.
    pub fn mul_slow(&self, a: Symbol, b: Symbol) -> Symbol {
        poly_mod(clmul(a as u32, b as u32), self.inner.poly) as Symbol
    }

    pub fn inv(&self, a: Symbol) -> Result<Symbol, GfError> {
        if a == 0 {
            return Err(GfError::DivisionByZero);
        }
        let group = self.order() - 1;
        Ok(match &self.inner.tables {
            Some(t) => {
                let l = t.log[a as usize] as u32;
                t.exp[((group - l) % group) as usize]
            }
            // a^(q-2) = a^-1 in the multiplicative group of order q-1
            None => self.pow(a, group - 1),
        })
    }

    pub fn div(&self, a: Symbol, b: Symbol) -> Result<Symbol, GfError> {
        Ok(self.mul(a, self.inv(b)?))
    }

    pub fn pow(&self, a: Symbol, mut e: u32) -> Symbol {
        let mut base = a;
        let mut acc: Symbol = 1;
        while e != 0 {
            if e & 1 != 0 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }

    /// Computes `dst[i] ^= c * src[i]`.
    pub fn mul_add_slice(&self, dst: &mut [Symbol], src: &[Symbol], c: Symbol) {
        debug_assert_eq!(dst.len(), src.len());
        match c {
            0 => {}
            1 => dst.iter_mut().zip(src).for_each(|(d, s)| *d ^= s),
            _ => dst
                .iter_mut()
                .zip(src)
                .for_each(|(d, &s)| *d ^= self.mul(c, s)),
        }
    }

    /// Scales a slice in place.
    pub fn scale_slice(&self, dst: &mut [Symbol], c: Symbol) {
        if c != 1 {
            dst.iter_mut().for_each(|d| *d = self.mul(c, *d));
        }
    }
}

fn build_tables(width: u32, poly: u32) -> Tables {
    let q = 1usize << width;
    let group = q - 1;
    let mul = |a: u32, b: u32| poly_mod(clmul(a, b), poly);

    // irreducible is not always primitive, so search for a generator
    let generator = if q == 2 {
        1
    } else {
        (2..q as u32)
            .find(|&g| {
                let mut x = g;
                let mut order = 1;
                while x != 1 {
                    x = mul(x, g);
                    order += 1;
                }
                order == group
            })
            .expect("multiplicative group of a finite field is cyclic")
    };

    let mut log = vec![0u16; q];
    let mut exp = vec![0u16; 2 * group];
    let mut x = 1u32;
    for i in 0..group {
        exp[i] = x as u16;
        exp[i + group] = x as u16;
        log[x as usize] = i as u16;
        x = mul(x, generator);
    }
    Tables { log, exp }
}
