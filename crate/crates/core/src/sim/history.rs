//! Half-step ring buffer of past signal values.

use std::collections::VecDeque;

use crate::error::{Error, Result};

/// Signals recorded at one half-step slot. Derivatives that could not be
/// formed are stored as NaN and reported when read.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Sample {
    pub u: Vec<f64>,
    pub y: Vec<f64>,
    pub u0: Vec<f64>,
    pub state: Vec<f64>,
}

impl Sample {
    pub fn read(series: &[f64], order: usize) -> Result<f64> {
        match series.get(order) {
            Some(v) if !v.is_nan() => Ok(*v),
            _ => Err(Error::InsufficientSmoothness {
                required: order,
                available: series.iter().take_while(|v| !v.is_nan()).count().saturating_sub(1),
            }),
        }
    }
}

/// Slot `j` holds time `j dt / 2`. Only the most recent `capacity` slots are kept.
#[derive(Debug, Clone)]
pub(crate) struct History {
    first: i64,
    slots: VecDeque<Sample>,
    capacity: usize,
}

impl History {
    pub fn new(first: i64, capacity: usize) -> Self {
        History { first, slots: VecDeque::with_capacity(capacity + 1), capacity }
    }

    pub fn push(&mut self, s: Sample) {
        self.slots.push_back(s);
        while self.slots.len() > self.capacity {
            self.slots.pop_front();
            self.first += 1;
        }
    }

    pub fn replace_last(&mut self, s: Sample) {
        if let Some(last) = self.slots.back_mut() {
            *last = s;
        }
    }

    pub fn get(&self, slot: i64, t: f64) -> Result<&Sample> {
        let idx = slot - self.first;
        if idx < 0 {
            return Err(Error::HistoryUnderflow { t });
        }
        self.slots.get(idx as usize).ok_or(Error::HistoryUnderflow { t })
    }
}
