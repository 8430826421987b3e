//! C ABI over the `mscox` library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_load`
//! style constructors and released with the matching `*_free`. Every
//! fallible call returns an [`MscoxStatus`]; on failure the message is
//! available from [`mscox_last_error_message`] until the next failing call
//! on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use mscox::config::RunConfig;
use mscox::cox::{integrated_intensity, intensity, sample_counts};
use mscox::estimator::{estimate_all, EstimationConfig, EstimationReport, ThetaDomain};
use mscox::grid::{detrend, FunctionalField, MeanCurve, SpatialGrid, TimeGrid};
use mscox::io::{load_field, save_field, FieldFormat};
use mscox::sarh::{simulate, SarhSpec};
use mscox::spectral::EtaWeight;
use mscox::wavelet::field_dwt;
use mscox::Error;
use ndarray::Array3;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MscoxStatus {
    Ok = 0,
    NullPointer = 1,
    Validation = 2,
    Shape = 3,
    Parse = 4,
    NonStationary = 5,
    Overflow = 6,
    Degenerate = 7,
    Config = 8,
    Io = 9,
    Serialization = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&Error> for MscoxStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Shape(_) => MscoxStatus::Shape,
            Error::Validation(_) => MscoxStatus::Validation,
            Error::Parse { .. } => MscoxStatus::Parse,
            Error::NonStationary(..) => MscoxStatus::NonStationary,
            Error::Overflow { .. } => MscoxStatus::Overflow,
            Error::Degenerate(_) => MscoxStatus::Degenerate,
            Error::Config { .. } => MscoxStatus::Config,
            Error::Io { .. } => MscoxStatus::Io,
            Error::Json(_) | Error::Csv(_) => MscoxStatus::Serialization,
        }
    }
}

/// Opaque curve field `(s1, s2, 2^depth)`.
pub struct MscoxField(FunctionalField);

/// Opaque estimation report.
pub struct MscoxReport(EstimationReport);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul removed"));
}

fn fail(status: MscoxStatus, message: impl Into<String>) -> MscoxStatus {
    set_error(message);
    status
}

/// Runs `body`, mapping errors and panics onto status codes.
fn guard(body: impl FnOnce() -> Result<(), MscoxStatus>) -> MscoxStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => MscoxStatus::Ok,
        Ok(Err(status)) => status,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(MscoxStatus::Panic, msg)
        }
    }
}

fn lift<T>(r: mscox::Result<T>) -> Result<T, MscoxStatus> {
    r.map_err(|e| fail(MscoxStatus::from(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, MscoxStatus> {
    if p.is_null() {
        return Err(fail(MscoxStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(MscoxStatus::Validation, format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, MscoxStatus> {
    p.as_ref()
        .ok_or_else(|| fail(MscoxStatus::NullPointer, format!("{name} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, MscoxStatus> {
    p.as_mut()
        .ok_or_else(|| fail(MscoxStatus::NullPointer, format!("{name} is null")))
}

/// Message of the last failing call on this thread (empty if none). The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn mscox_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mscox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Simulates the reference design (tabulated eigenvalues, coupled third
/// operator, default variance profile).
///
/// # Safety
/// `out` must be a valid pointer to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn mscox_simulate_reference(
    s1: usize,
    s2: usize,
    depth: u32,
    truncation: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut MscoxField,
) -> MscoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let time = lift(TimeGrid::new(depth))?;
        let spec = lift(SarhSpec::reference(time, truncation))?;
        let grid = lift(SpatialGrid::new(s1, s2))?;
        let field = lift(simulate(&spec, grid, burn_in, seed))?;
        *out = Box::into_raw(Box::new(MscoxField(field)));
        Ok(())
    })
}

/// Simulates from a JSON run configuration (the CLI schema).
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_simulate_config(config_json: *const c_char, out: *mut *mut MscoxField) -> MscoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let config = lift(RunConfig::from_json_str(str_arg(config_json, "config_json")?))?;
        let spec = lift(config.spec())?;
        let grid = lift(config.spatial_grid())?;
        let field = lift(simulate(&spec, grid, config.simulation.burn_in, config.simulation.seed))?;
        *out = Box::into_raw(Box::new(MscoxField(field)));
        Ok(())
    })
}

/// Builds a field from `s1·s2·2^depth` row-major values (time fastest).
///
/// # Safety
/// `values` must point to `len` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_from_values(
    s1: usize,
    s2: usize,
    depth: u32,
    values: *const f64,
    len: usize,
    out: *mut *mut MscoxField,
) -> MscoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        if values.is_null() {
            return Err(fail(MscoxStatus::NullPointer, "values is null"));
        }
        let time = lift(TimeGrid::new(depth))?;
        let grid = lift(SpatialGrid::new(s1, s2))?;
        let expected = s1 * s2 * time.len();
        if len != expected {
            return Err(fail(
                MscoxStatus::Shape,
                format!("expected {expected} values, got {len}"),
            ));
        }
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let array = Array3::from_shape_vec((s1, s2, time.len()), data).expect("length checked");
        let field = lift(FunctionalField::new(grid, time, array))?;
        *out = Box::into_raw(Box::new(MscoxField(field)));
        Ok(())
    })
}

/// Loads a field file; the format follows the extension (`.csv`, `.ndjson`).
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_load(path: *const c_char, out: *mut *mut MscoxField) -> MscoxStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = FieldFormat::from_path(&path)
            .ok_or_else(|| fail(MscoxStatus::Validation, "cannot infer format from extension"))?;
        let field = lift(load_field(&path, format))?;
        *out = Box::into_raw(Box::new(MscoxField(field)));
        Ok(())
    })
}

/// Saves a field; the format follows the extension.
///
/// # Safety
/// `field` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_save(field: *const MscoxField, path: *const c_char) -> MscoxStatus {
    guard(|| {
        let field = ref_arg(field, "field")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = FieldFormat::from_path(&path)
            .ok_or_else(|| fail(MscoxStatus::Validation, "cannot infer format from extension"))?;
        lift(save_field(&field.0, &path, format))
    })
}

/// Writes the dimensions `(s1, s2, number of time points)`.
///
/// # Safety
/// `field` must be a live handle; the output pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_dims(
    field: *const MscoxField,
    s1: *mut usize,
    s2: *mut usize,
    n_time: *mut usize,
) -> MscoxStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        *out_arg(s1, "s1")? = f.grid().rows();
        *out_arg(s2, "s2")? = f.grid().cols();
        *out_arg(n_time, "n_time")? = f.time().len();
        Ok(())
    })
}

/// Copies the values row-major (time fastest) into `buf`.
///
/// # Safety
/// `field` must be a live handle; `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_values(field: *const MscoxField, buf: *mut f64, len: usize) -> MscoxStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        if buf.is_null() {
            return Err(fail(MscoxStatus::NullPointer, "buf is null"));
        }
        let n = f.values().len();
        if len < n {
            return Err(fail(MscoxStatus::BufferTooSmall, format!("need {n} doubles, got {len}")));
        }
        let dst = std::slice::from_raw_parts_mut(buf, n);
        for (d, s) in dst.iter_mut().zip(f.values().iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Releases a field handle. Null is ignored.
///
/// # Safety
/// `field` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mscox_field_free(field: *mut MscoxField) {
    if !field.is_null() {
        drop(Box::from_raw(field));
    }
}

/// Detrends, transforms, and estimates the diagonal operator parameters.
/// `factorized` selects the two-parameter domain `θ₃ = −θ₁θ₂`.
///
/// # Safety
/// `field` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_estimate(
    field: *const MscoxField,
    j0: u32,
    factorized: bool,
    out: *mut *mut MscoxReport,
) -> MscoxStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        let out = out_arg(out, "out")?;
        let (residual, _) = detrend(f);
        let coeffs = lift(field_dwt(&residual, j0))?;
        let report = lift(estimate_all(
            &coeffs,
            &ThetaDomain::default_box(factorized),
            EstimationConfig {
                eta: EtaWeight::W2W2,
                include_cross: false,
            },
        ))?;
        *out = Box::into_raw(Box::new(MscoxReport(report)));
        Ok(())
    })
}

/// Copies the estimated eigenvalues of operator `operator` (1, 2 or 3),
/// ordered by decreasing magnitude, and writes their number to `written`.
///
/// # Safety
/// `report` must be a live handle; `buf` must point to `len` writable
/// doubles; `written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mscox_report_eigenvalues(
    report: *const MscoxReport,
    operator: u32,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> MscoxStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.0;
        let written = out_arg(written, "written")?;
        if !(1..=3).contains(&operator) {
            return Err(fail(MscoxStatus::Validation, format!("operator must be 1, 2 or 3, got {operator}")));
        }
        let values = &r.eigenvalues[operator as usize - 1];
        *written = values.len();
        if len < values.len() {
            return Err(fail(
                MscoxStatus::BufferTooSmall,
                format!("need {} doubles, got {len}", values.len()),
            ));
        }
        if buf.is_null() {
            return Err(fail(MscoxStatus::NullPointer, "buf is null"));
        }
        std::slice::from_raw_parts_mut(buf, values.len()).copy_from_slice(values);
        Ok(())
    })
}

/// Writes the report as NDJSON.
///
/// # Safety
/// `report` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn mscox_report_save(report: *const MscoxReport, path: *const c_char) -> MscoxStatus {
    guard(|| {
        let r = &ref_arg(report, "report")?.0;
        let path = PathBuf::from(str_arg(path, "path")?);
        let file = std::fs::File::create(&path).map_err(|e| {
            let e = Error::io(&path, e);
            fail(MscoxStatus::from(&e), e.to_string())
        })?;
        let mut w = std::io::BufWriter::new(file);
        lift(r.write_ndjson(&mut w))
    })
}

/// Releases a report handle. Null is ignored.
///
/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mscox_report_free(report: *mut MscoxReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Treats `field` as a log-intensity, integrates `exp` over time per cell,
/// scales by `area_scale`, and draws Poisson counts. Writes `s1·s2` counts
/// and means row-major.
///
/// # Safety
/// `field` must be a live handle; `counts` and `means` must each point to
/// `len` writable elements.
#[no_mangle]
pub unsafe extern "C" fn mscox_sample_counts(
    field: *const MscoxField,
    area_scale: f64,
    seed: u64,
    counts: *mut u64,
    means: *mut f64,
    len: usize,
) -> MscoxStatus {
    guard(|| {
        let f = &ref_arg(field, "field")?.0;
        if counts.is_null() || means.is_null() {
            return Err(fail(MscoxStatus::NullPointer, "output buffer is null"));
        }
        let n = f.grid().size();
        if len < n {
            return Err(fail(MscoxStatus::BufferTooSmall, format!("need {n} cells, got {len}")));
        }
        if !(area_scale > 0.0 && area_scale.is_finite()) {
            return Err(fail(MscoxStatus::Validation, "area_scale must be positive and finite"));
        }
        let lambda = lift(intensity(f, &MeanCurve::zeros(f.time())))?;
        let grid = lift(sample_counts(&(integrated_intensity(&lambda) * area_scale), seed))?;
        let (c, m) = (
            std::slice::from_raw_parts_mut(counts, n),
            std::slice::from_raw_parts_mut(means, n),
        );
        for (i, (&cv, &mv)) in grid.counts().iter().zip(grid.means().iter()).enumerate() {
            c[i] = cv;
            m[i] = mv;
        }
        Ok(())
    })
}
