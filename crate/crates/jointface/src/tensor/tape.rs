//! Thread-local recording tape for reverse-mode differentiation.
//!
//! Each thread owns exactly one tape; operations append in forward order
//! and `backward` drains in reverse. Parallel evaluation therefore needs
//! one tape (thread) per execution context.

use std::cell::RefCell;

use super::Tensor;

pub(crate) struct TapeEntry {
    pub output: Tensor,
    pub backward: Box<dyn Fn(&[f64])>,
}

struct TapeState {
    entries: Vec<TapeEntry>,
    grad_enabled: bool,
    strict: bool,
}

thread_local! {
    static TAPE: RefCell<TapeState> = RefCell::new(TapeState {
        entries: Vec::new(),
        grad_enabled: true,
        strict: false,
    });
}

pub(crate) fn record(output: Tensor, backward: Box<dyn Fn(&[f64])>) {
    TAPE.with(|t| t.borrow_mut().entries.push(TapeEntry { output, backward }));
}

pub(crate) fn take() -> Vec<TapeEntry> {
    TAPE.with(|t| std::mem::take(&mut t.borrow_mut().entries))
}

/// Drops all recorded operations without running them.
pub fn clear() {
    TAPE.with(|t| t.borrow_mut().entries.clear());
}

pub fn len() -> usize {
    TAPE.with(|t| t.borrow().entries.len())
}

pub fn grad_enabled() -> bool {
    TAPE.with(|t| t.borrow().grad_enabled)
}

/// Runs `f` with recording disabled (inference, finite differences).
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    let prev = TAPE.with(|t| {
        let mut s = t.borrow_mut();
        let prev = s.grad_enabled;
        s.grad_enabled = false;
        prev
    });
    let result = f();
    TAPE.with(|t| t.borrow_mut().grad_enabled = prev);
    result
}

/// Opt-in NaN/Inf detection on every op input.
pub fn set_strict(on: bool) {
    TAPE.with(|t| t.borrow_mut().strict = on);
}

pub fn strict_enabled() -> bool {
    TAPE.with(|t| t.borrow().strict)
}
