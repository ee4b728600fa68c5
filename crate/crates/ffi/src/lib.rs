//! C ABI over the cellsleep core: the per-class power model, switch
//! evaluation with vertical offloading, the reference switching policies and
//! the trained traffic predictor.
//!
//! The generated header lands in `include/cellsleep.h`. Handles returned by
//! the `*_new`/`*_load` constructors are opaque and must be released with
//! the matching `*_free`; every other function returns a [`CsStatus`] and
//! writes results through out-pointers. Passing a null required pointer
//! yields `CS_STATUS_NULL_POINTER`, never a crash. Pointer-length pairs must
//! describe valid buffers of the documented size; that is the callers' side
//! of the contract and why these entry points are `unsafe` from Rust.

use std::ffi::{c_char, CStr};

use cellsleep::baselines::{aao, exhaustive_search, mlc, thesis};
use cellsleep::fedlearn::{predict_loads, GlobalModel};
use cellsleep::network::{
    evaluate_switch, power_saved, MacroCellConfig, OffloadScaling, SwitchVector,
};
use cellsleep::power::{instantaneous_power, BsClass, LoadFraction, ProfileSet};

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// A load was outside `[0, 1]` or otherwise out of the model's domain.
    DomainError = 3,
    /// The instance is too large for the requested policy.
    TooLarge = 4,
    IoError = 5,
}

/// Station classes, macro included.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsBsClass {
    Macro = 0,
    Rrh = 1,
    Micro = 2,
    Pico = 3,
    Femto = 4,
}

impl From<CsBsClass> for BsClass {
    fn from(c: CsBsClass) -> BsClass {
        match c {
            CsBsClass::Macro => BsClass::Macro,
            CsBsClass::Rrh => BsClass::Rrh,
            CsBsClass::Micro => BsClass::Micro,
            CsBsClass::Pico => BsClass::Pico,
            CsBsClass::Femto => BsClass::Femto,
        }
    }
}

/// How sleeping-cell traffic converts onto the macro station.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsOffloadScaling {
    BandwidthScaled = 0,
    Literal = 1,
}

/// The built-in switching policies.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsPolicy {
    Aao = 0,
    Es = 1,
    Mlc = 2,
    Thesis = 3,
}

/// Opaque macro-cell handle: topology, capacity limit and power constants.
pub struct CsCell {
    cfg: MacroCellConfig,
    profiles: ProfileSet,
}

/// Opaque trained-predictor handle.
pub struct CsPredictor {
    model: GlobalModel,
}

/// Builds a macro cell from its small-cell classes. `sbs_classes` points at
/// `n_sbs` entries; the macro station is implicit. The default per-class
/// power constants apply.
///
/// # Safety
/// `sbs_classes` must be readable for `n_sbs` entries and `out_cell` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cs_cell_new(
    sbs_classes: *const CsBsClass,
    n_sbs: usize,
    mbs_capacity_limit: f64,
    scaling: CsOffloadScaling,
    out_cell: *mut *mut CsCell,
) -> CsStatus {
    if out_cell.is_null() || (n_sbs > 0 && sbs_classes.is_null()) {
        return CsStatus::NullPointer;
    }
    let classes: Vec<BsClass> = std::slice::from_raw_parts(sbs_classes, n_sbs)
        .iter()
        .map(|c| BsClass::from(*c))
        .collect();
    let scaling = match scaling {
        CsOffloadScaling::BandwidthScaled => OffloadScaling::BandwidthScaled,
        CsOffloadScaling::Literal => OffloadScaling::Literal,
    };
    match MacroCellConfig::new(classes, mbs_capacity_limit, scaling) {
        Ok(cfg) => {
            let cell = Box::new(CsCell {
                cfg,
                profiles: ProfileSet::default(),
            });
            *out_cell = Box::into_raw(cell);
            CsStatus::Ok
        }
        Err(_) => CsStatus::InvalidArgument,
    }
}

/// Releases a cell handle. Null is a no-op.
///
/// # Safety
/// `cell` must have come from `cs_cell_new` and not been freed before.
#[no_mangle]
pub unsafe extern "C" fn cs_cell_free(cell: *mut CsCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Stations in the cell, macro included; 0 for a null handle.
///
/// # Safety
/// `cell` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cs_cell_n_bs(cell: *const CsCell) -> usize {
    if cell.is_null() {
        return 0;
    }
    (*cell).cfg.n_bs()
}

/// Instantaneous draw of one station class at `load`, or its sleep constant
/// when `is_on` is false.
///
/// # Safety
/// `cell` must be a live handle and `out_watts` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_instantaneous_power(
    cell: *const CsCell,
    class: CsBsClass,
    load: f64,
    is_on: bool,
    out_watts: *mut f64,
) -> CsStatus {
    if cell.is_null() || out_watts.is_null() {
        return CsStatus::NullPointer;
    }
    let cell = &*cell;
    match instantaneous_power(cell.profiles.get(class.into()), load, is_on) {
        Ok(w) => {
            *out_watts = w;
            CsStatus::Ok
        }
        Err(_) => CsStatus::DomainError,
    }
}

unsafe fn collect_loads(
    cell: &CsCell,
    raw_loads: *const f64,
) -> Result<Vec<LoadFraction>, CsStatus> {
    let slice = std::slice::from_raw_parts(raw_loads, cell.cfg.n_bs());
    slice
        .iter()
        .map(|&l| LoadFraction::new(l).map_err(|_| CsStatus::DomainError))
        .collect()
}

unsafe fn collect_switch(cell: &CsCell, sbs_on: *const u8) -> SwitchVector {
    let bits: Vec<bool> = std::slice::from_raw_parts(sbs_on, cell.cfg.n_sbs())
        .iter()
        .map(|b| *b != 0)
        .collect();
    SwitchVector::from_sbs_bits(&bits)
}

/// Evaluates one switch assignment: total power, post-offload macro load and
/// feasibility. `raw_loads` holds `n_bs` per-station loads (macro first);
/// `sbs_on` holds `n_sbs` flags, nonzero meaning on. Null out-pointers are
/// skipped.
///
/// # Safety
/// `cell` must be a live handle; `raw_loads` and `sbs_on` must be readable
/// for `n_bs` and `n_sbs` entries respectively.
#[no_mangle]
pub unsafe extern "C" fn cs_evaluate_switch(
    cell: *const CsCell,
    raw_loads: *const f64,
    sbs_on: *const u8,
    out_power_w: *mut f64,
    out_effective_mbs_load: *mut f64,
    out_feasible: *mut u8,
) -> CsStatus {
    if cell.is_null() || raw_loads.is_null() || sbs_on.is_null() {
        return CsStatus::NullPointer;
    }
    let cell = &*cell;
    let loads = match collect_loads(cell, raw_loads) {
        Ok(l) => l,
        Err(status) => return status,
    };
    let outcome = evaluate_switch(
        &loads,
        &collect_switch(cell, sbs_on),
        &cell.cfg,
        &cell.profiles,
    );
    if !out_power_w.is_null() {
        *out_power_w = outcome.power_w;
    }
    if !out_effective_mbs_load.is_null() {
        *out_effective_mbs_load = outcome.effective_mbs_load;
    }
    if !out_feasible.is_null() {
        *out_feasible = outcome.feasible as u8;
    }
    CsStatus::Ok
}

/// Instantaneous power saved by an assignment relative to all-on; negative
/// when sleeping costs more at the macro than it saves locally.
///
/// # Safety
/// Same buffer contracts as `cs_evaluate_switch`, plus a writable
/// `out_watts`.
#[no_mangle]
pub unsafe extern "C" fn cs_power_saved(
    cell: *const CsCell,
    raw_loads: *const f64,
    sbs_on: *const u8,
    out_watts: *mut f64,
) -> CsStatus {
    if cell.is_null() || raw_loads.is_null() || sbs_on.is_null() || out_watts.is_null() {
        return CsStatus::NullPointer;
    }
    let cell = &*cell;
    let loads = match collect_loads(cell, raw_loads) {
        Ok(l) => l,
        Err(status) => return status,
    };
    let saved = power_saved(
        &loads,
        &collect_switch(cell, sbs_on),
        &cell.profiles,
        &cell.cfg,
    );
    *out_watts = saved;
    CsStatus::Ok
}

/// Runs a reference policy on one slot of loads. `out_sbs_on` receives
/// `n_sbs` flags; `out_power_w` (optional) the resulting network power.
/// Exhaustive search refuses cells past its 20-small-cell cap with
/// `CS_STATUS_TOO_LARGE`.
///
/// # Safety
/// `cell` must be a live handle; `raw_loads` readable for `n_bs` entries;
/// `out_sbs_on` writable for `n_sbs` entries.
#[no_mangle]
pub unsafe extern "C" fn cs_policy_run(
    cell: *const CsCell,
    policy: CsPolicy,
    raw_loads: *const f64,
    seed: u64,
    out_sbs_on: *mut u8,
    out_power_w: *mut f64,
) -> CsStatus {
    if cell.is_null() || raw_loads.is_null() || out_sbs_on.is_null() {
        return CsStatus::NullPointer;
    }
    let cell = &*cell;
    let loads = match collect_loads(cell, raw_loads) {
        Ok(l) => l,
        Err(status) => return status,
    };
    let n = cell.cfg.n_sbs();
    let result = match policy {
        CsPolicy::Aao => aao(&loads, &cell.profiles, &cell.cfg),
        CsPolicy::Es => match exhaustive_search(&loads, &cell.profiles, &cell.cfg) {
            Ok(r) => r,
            Err(_) => return CsStatus::TooLarge,
        },
        CsPolicy::Mlc => {
            let k_max = 8.min(n).max(2);
            mlc(&loads, &cell.profiles, &cell.cfg, 2..=k_max, seed)
        }
        CsPolicy::Thesis => match thesis(&loads, &cell.profiles, &cell.cfg, 10, seed) {
            Ok(r) => r,
            Err(_) => return CsStatus::InvalidArgument,
        },
    };
    let bits = result.switch.sbs_bits();
    let out = std::slice::from_raw_parts_mut(out_sbs_on, n);
    for (o, b) in out.iter_mut().zip(bits) {
        *o = *b as u8;
    }
    if !out_power_w.is_null() {
        *out_power_w = result.power_w;
    }
    CsStatus::Ok
}

/// Loads a predictor checkpoint written by the training pipeline.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_predictor` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_predictor_load(
    path: *const c_char,
    out_predictor: *mut *mut CsPredictor,
) -> CsStatus {
    if path.is_null() || out_predictor.is_null() {
        return CsStatus::NullPointer;
    }
    let path = match CStr::from_ptr(path).to_str() {
        Ok(p) => p,
        Err(_) => return CsStatus::InvalidArgument,
    };
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(_) => return CsStatus::IoError,
    };
    match cellsleep::nn::load_params(file) {
        Ok((spec, params)) => {
            let model = GlobalModel { spec, params };
            *out_predictor = Box::into_raw(Box::new(CsPredictor { model }));
            CsStatus::Ok
        }
        Err(_) => CsStatus::IoError,
    }
}

/// Releases a predictor handle. Null is a no-op.
///
/// # Safety
/// `predictor` must have come from `cs_predictor_load` and not been freed
/// before.
#[no_mangle]
pub unsafe extern "C" fn cs_predictor_free(predictor: *mut CsPredictor) {
    if !predictor.is_null() {
        drop(Box::from_raw(predictor));
    }
}

/// History length the predictor consumes; 0 for a null handle.
///
/// # Safety
/// `predictor` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cs_predictor_window(predictor: *const CsPredictor) -> usize {
    if predictor.is_null() {
        return 0;
    }
    (*predictor).model.spec.input_width()
}

/// Predicts the next-slot load from at least `cs_predictor_window` recent
/// loads (the most recent last). The estimate is clipped into `[0, 1]`.
///
/// # Safety
/// `predictor` must be a live handle, `history` readable for `len` entries,
/// `out_load` writable.
#[no_mangle]
pub unsafe extern "C" fn cs_predictor_predict(
    predictor: *const CsPredictor,
    history: *const f64,
    len: usize,
    out_load: *mut f64,
) -> CsStatus {
    if predictor.is_null() || history.is_null() || out_load.is_null() {
        return CsStatus::NullPointer;
    }
    let predictor = &*predictor;
    let history = std::slice::from_raw_parts(history, len).to_vec();
    match predict_loads(&predictor.model, &[history]) {
        Ok(estimates) => {
            *out_load = estimates[0];
            CsStatus::Ok
        }
        Err(_) => CsStatus::InvalidArgument,
    }
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cs_status_message(status: CsStatus) -> *const c_char {
    let msg: &'static [u8] = match status {
        CsStatus::Ok => b"ok\0",
        CsStatus::NullPointer => b"required pointer was null\0",
        CsStatus::InvalidArgument => b"invalid argument\0",
        CsStatus::DomainError => b"input outside the model's domain\0",
        CsStatus::TooLarge => b"instance too large for this policy\0",
        CsStatus::IoError => b"could not read the checkpoint\0",
    };
    msg.as_ptr() as *const c_char
}
