//! Transaction record schema and its canonical digest.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};

/// SHA-256 digest of a canonical record.
pub type Digest = [u8; 32];

/// Separator placed between fields in the canonical serialization.
pub const FIELD_SEPARATOR: u8 = 0x1F;

/// The fourteen record dimensions, in schema order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[repr(u8)]
pub enum Dimension {
    From = 0,
    To,
    ToCreate,
    FromIsContract,
    ToIsContract,
    Value,
    GasLimit,
    GasPrice,
    GasUsed,
    CallingFunction,
    IsError,
    Eip2718Type,
    MaxFeePerGas,
    MaxPriorityFeePerGas,
}

impl Dimension {
    pub const COUNT: usize = 14;

    pub const ALL: [Dimension; Dimension::COUNT] = [
        Dimension::From,
        Dimension::To,
        Dimension::ToCreate,
        Dimension::FromIsContract,
        Dimension::ToIsContract,
        Dimension::Value,
        Dimension::GasLimit,
        Dimension::GasPrice,
        Dimension::GasUsed,
        Dimension::CallingFunction,
        Dimension::IsError,
        Dimension::Eip2718Type,
        Dimension::MaxFeePerGas,
        Dimension::MaxPriorityFeePerGas,
    ];

    /// Dimensions whose values become keyword features automatically.
    pub fn keyword_dimensions() -> impl Iterator<Item = Dimension> {
        Dimension::ALL
            .into_iter()
            .filter(|d| *d != Dimension::Value)
    }

    pub fn name(self) -> &'static str {
        match self {
            Dimension::From => "from",
            Dimension::To => "to",
            Dimension::ToCreate => "toCreate",
            Dimension::FromIsContract => "fromIsContract",
            Dimension::ToIsContract => "toIsContract",
            Dimension::Value => "value",
            Dimension::GasLimit => "gasLimit",
            Dimension::GasPrice => "gasPrice",
            Dimension::GasUsed => "gasUsed",
            Dimension::CallingFunction => "callingFunction",
            Dimension::IsError => "isError",
            Dimension::Eip2718Type => "eip2718type",
            Dimension::MaxFeePerGas => "maxFeePerGas",
            Dimension::MaxPriorityFeePerGas => "maxPriorityFeePerGas",
        }
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Dimension> {
        Dimension::ALL.get(i).copied()
    }

    pub fn is_text(self) -> bool {
        matches!(
            self,
            Dimension::From | Dimension::To | Dimension::CallingFunction
        )
    }

    /// Dimensions restricted to {0, 1}.
    pub fn is_flag(self) -> bool {
        matches!(
            self,
            Dimension::FromIsContract | Dimension::ToIsContract | Dimension::IsError
        )
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Dimension {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Dimension::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| Error::Schema(alloc::format!("unknown dimension `{s}`")))
    }
}

/// An owned dimension value.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(untagged))]
pub enum Value {
    Int(u64),
    Text(String),
}

impl Value {
    pub fn as_ref(&self) -> ValueRef<'_> {
        match self {
            Value::Int(v) => ValueRef::Int(*v),
            Value::Text(s) => ValueRef::Text(s),
        }
    }

    /// Parses `raw` according to the dimension's field type.
    pub fn parse_for(dimension: Dimension, raw: &str) -> Result<Value> {
        if dimension.is_text() {
            Ok(Value::Text(raw.to_string()))
        } else {
            raw.trim().parse::<u64>().map(Value::Int).map_err(|_| {
                Error::Schema(alloc::format!(
                    "dimension {dimension} expects a non-negative integer, got `{raw}`"
                ))
            })
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.as_ref().fmt(f)
    }
}

/// A borrowed dimension value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ValueRef<'a> {
    Int(u64),
    Text(&'a str),
}

impl ValueRef<'_> {
    pub fn to_owned(self) -> Value {
        match self {
            ValueRef::Int(v) => Value::Int(v),
            ValueRef::Text(s) => Value::Text(s.to_string()),
        }
    }
}

impl fmt::Display for ValueRef<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValueRef::Int(v) => write!(f, "{v}"),
            ValueRef::Text(s) => f.write_str(s),
        }
    }
}

/// One ledger entry.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(
    feature = "serde",
    serde(rename_all = "camelCase", deny_unknown_fields)
)]
pub struct TransactionRecord {
    pub from: String,
    pub to: String,
    pub to_create: u64,
    pub from_is_contract: u64,
    pub to_is_contract: u64,
    pub value: u64,
    pub gas_limit: u64,
    pub gas_price: u64,
    pub gas_used: u64,
    pub calling_function: String,
    pub is_error: u64,
    #[cfg_attr(feature = "serde", serde(rename = "eip2718type"))]
    pub eip2718_type: u64,
    pub max_fee_per_gas: u64,
    pub max_priority_fee_per_gas: u64,
}

impl TransactionRecord {
    /// The example row of the schema table.
    pub fn sample() -> Self {
        TransactionRecord {
            from: "0x123456789abcdef".into(),
            to: "0x987654321fedcba".into(),
            to_create: 1,
            from_is_contract: 1,
            to_is_contract: 1,
            value: 10_000,
            gas_limit: 21_000,
            gas_price: 50_000,
            gas_used: 15_000,
            calling_function: "transfer".into(),
            is_error: 0,
            eip2718_type: 0,
            max_fee_per_gas: 10_000,
            max_priority_fee_per_gas: 50_000,
        }
    }

    pub fn get(&self, dimension: Dimension) -> ValueRef<'_> {
        use ValueRef::{Int, Text};
        match dimension {
            Dimension::From => Text(&self.from),
            Dimension::To => Text(&self.to),
            Dimension::ToCreate => Int(self.to_create),
            Dimension::FromIsContract => Int(self.from_is_contract),
            Dimension::ToIsContract => Int(self.to_is_contract),
            Dimension::Value => Int(self.value),
            Dimension::GasLimit => Int(self.gas_limit),
            Dimension::GasPrice => Int(self.gas_price),
            Dimension::GasUsed => Int(self.gas_used),
            Dimension::CallingFunction => Text(&self.calling_function),
            Dimension::IsError => Int(self.is_error),
            Dimension::Eip2718Type => Int(self.eip2718_type),
            Dimension::MaxFeePerGas => Int(self.max_fee_per_gas),
            Dimension::MaxPriorityFeePerGas => Int(self.max_priority_fee_per_gas),
        }
    }

    /// Sets one field from a textual value.
    pub fn set(&mut self, dimension: Dimension, raw: &str) -> Result<()> {
        let value = Value::parse_for(dimension, raw)?;
        match (dimension, value) {
            (Dimension::From, Value::Text(s)) => self.from = s,
            (Dimension::To, Value::Text(s)) => self.to = s,
            (Dimension::CallingFunction, Value::Text(s)) => self.calling_function = s,
            (d, Value::Int(v)) => *self.int_field_mut(d) = v,
            (d, Value::Text(_)) => unreachable!("text value for integer dimension {d}"),
        }
        Ok(())
    }

    fn int_field_mut(&mut self, dimension: Dimension) -> &mut u64 {
        match dimension {
            Dimension::ToCreate => &mut self.to_create,
            Dimension::FromIsContract => &mut self.from_is_contract,
            Dimension::ToIsContract => &mut self.to_is_contract,
            Dimension::Value => &mut self.value,
            Dimension::GasLimit => &mut self.gas_limit,
            Dimension::GasPrice => &mut self.gas_price,
            Dimension::GasUsed => &mut self.gas_used,
            Dimension::IsError => &mut self.is_error,
            Dimension::Eip2718Type => &mut self.eip2718_type,
            Dimension::MaxFeePerGas => &mut self.max_fee_per_gas,
            Dimension::MaxPriorityFeePerGas => &mut self.max_priority_fee_per_gas,
            Dimension::From | Dimension::To | Dimension::CallingFunction => {
                unreachable!("{dimension} is a text dimension")
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        for d in Dimension::ALL.into_iter().filter(|d| d.is_flag()) {
            if let ValueRef::Int(v) = self.get(d) {
                if v > 1 {
                    return Err(Error::Ingestion(alloc::format!(
                        "{d} must be 0 or 1, got {v}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fields in schema order, UTF-8 text and decimal integers, separated by 0x1F.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(160);
        for (i, d) in Dimension::ALL.into_iter().enumerate() {
            if i > 0 {
                out.push(FIELD_SEPARATOR);
            }
            match self.get(d) {
                ValueRef::Text(s) => out.extend_from_slice(s.as_bytes()),
                ValueRef::Int(v) => push_decimal(&mut out, v),
            }
        }
        out
    }

    pub fn digest(&self) -> Digest {
        Sha256::digest(self.canonical_bytes()).into()
    }
}

fn push_decimal(out: &mut Vec<u8>, mut v: u64) {
    let mut buf = [0u8; 20];
    let mut i = buf.len();
    loop {
        i -= 1;
        buf[i] = b'0' + (v % 10) as u8;
        v /= 10;
        if v == 0 {
            break;
        }
    }
    out.extend_from_slice(&buf[i..]);
}
