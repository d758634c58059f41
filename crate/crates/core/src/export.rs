//! Plot-data bundle: three normalized CSVs plus the fitted rates, derived from
//! the artifacts of a finished run directory.
//!
//! | file | header |
//! |---|---|
//! | `decay.csv` | [`DECAY_HEADER`] |
//! | `spectrum.csv` | [`SPECTRUM_HEADER`] |
//! | `scattering.csv` | [`SCATTERING_HEADER`] |
//! | `fits.csv` | [`FITS_HEADER`] |
//!
//! `scattering.csv` holds only its header when the run tracked no profile.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::diagnostics::{fmt_f64, read_csv};
use crate::error::{Error, Result};
use crate::run::{files, SPECTRA_HEADER};
use crate::scattering::{parse_report, ScatteringReport};

pub const DECAY_HEADER: &str = "t,sup_h,u_hn,gamma_u,x_u,x_w,max_dn,tail_ratio,wrap_valid";
pub const SPECTRUM_HEADER: &str = "t,xi,abs_h_hat";
pub const SCATTERING_HEADER: &str = ScatteringReport::CURVE_HEADER;
pub const FITS_HEADER: &str = "quantity,value,band,fit_lo,fit_hi";

pub const DECAY_FILE: &str = "decay.csv";
pub const SPECTRUM_FILE: &str = "spectrum.csv";
pub const SCATTERING_FILE: &str = "scattering.csv";
pub const FITS_FILE: &str = "fits.csv";

fn missing(dir: &Path, what: &str) -> Error {
    Error::Config(format!("run directory {} has no {what}", dir.display()))
}

fn key_values(path: &Path) -> Result<BTreeMap<String, String>> {
    Ok(parse_report(&std::fs::read_to_string(path)?)?.into_iter().collect())
}

/// Writes the bundle into `out` (created if needed) and returns the paths of
/// the four files. Re-running on the same input is byte-identical.
pub fn export_plotdata(run_dir: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let diag = run_dir.join(files::DIAGNOSTICS);
    let spectra = run_dir.join(files::SPECTRA);
    let summary = run_dir.join(files::SUMMARY);
    for (p, what) in [(&diag, files::DIAGNOSTICS), (&spectra, files::SPECTRA), (&summary, files::SUMMARY)] {
        if !p.is_file() {
            return Err(missing(run_dir, what));
        }
    }
    std::fs::create_dir_all(out)?;

    let records = read_csv(&diag)?;
    let mut decay = format!("{DECAY_HEADER}\n");
    for r in &records {
        let row = [r.t, r.sup_h, r.u_hn, r.gamma_u, r.x_u, r.x_w, r.max_dn, r.tail_ratio].map(fmt_f64).join(",");
        decay.push_str(&format!("{row},{}\n", r.wrap_valid));
    }

    let text = std::fs::read_to_string(&spectra)?;
    let mut lines = text.lines();
    if lines.next() != Some(SPECTRA_HEADER) {
        return Err(Error::Analysis(format!("{} has an unexpected header", spectra.display())));
    }
    let mut spectrum = format!("{SPECTRUM_HEADER}\n");
    for l in lines.filter(|l| !l.is_empty()) {
        spectrum.push_str(l);
        spectrum.push('\n');
    }

    let curve = run_dir.join(files::SCATTERING_CURVE);
    let scattering = if curve.is_file() {
        let t = std::fs::read_to_string(&curve)?;
        if t.lines().next() != Some(SCATTERING_HEADER) {
            return Err(Error::Analysis(format!("{} has an unexpected header", curve.display())));
        }
        t
    } else {
        format!("{SCATTERING_HEADER}\n")
    };

    let sm = key_values(&summary)?;
    let get = |m: &BTreeMap<String, String>, k: &str| m.get(k).cloned().unwrap_or_else(|| "nan".into());
    let mut fits = format!("{FITS_HEADER}\n");
    fits.push_str(&format!(
        "decay_slope,{},{},{},{}\n",
        get(&sm, "decay_slope"),
        get(&sm, "decay_band"),
        get(&sm, "decay_fit_lo"),
        get(&sm, "decay_fit_hi")
    ));
    let report = run_dir.join(files::SCATTERING_REPORT);
    if report.is_file() {
        let rp = key_values(&report)?;
        fits.push_str(&format!(
            "scattering_delta,{},{},{},{}\n",
            get(&rp, "delta"),
            get(&rp, "delta_band"),
            get(&rp, "fit_lo"),
            get(&rp, "fit_hi")
        ));
    }

    let mut written = Vec::new();
    for (name, body) in [
        (DECAY_FILE, decay),
        (SPECTRUM_FILE, spectrum),
        (SCATTERING_FILE, scattering),
        (FITS_FILE, fits),
    ] {
        let p = out.join(name);
        std::fs::write(&p, body)?;
        written.push(p);
    }
    Ok(written)
}
