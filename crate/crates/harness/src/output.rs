//! CSV writers. Every file has a header row; floats are printed in
//! scientific notation with 9 significant digits.
//!
//! Output directory layout of a run:
//!
//! ```text
//! config.toml              resolved configuration, every key
//! summary.csv              one row per filter
//! convergence.csv          one row per trial and filter
//! trials/trial_0007_riekf.csv
//! ```

use crate::config::ExperimentConfig;
use crate::driver::Row;
use crate::experiment::{ExperimentResult, TrialRecord};
use crate::metrics::FilterSummary;
use inekf::sim::{SensorEvent, SensorStream};
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub fn float(x: f64) -> String {
    format!("{x:.8e}")
}

fn floats(xs: impl IntoIterator<Item = f64>) -> String {
    xs.into_iter().map(float).collect::<Vec<_>>().join(",")
}

fn text(s: &str) -> String {
    s.replace([',', '\n', '\r'], ";")
}

pub const TRIAL_HEADER: &str = "t,true_roll_deg,true_pitch_deg,true_yaw_deg,est_roll_deg,est_pitch_deg,est_yaw_deg,\
true_body_vx,true_body_vy,true_body_vz,est_body_vx,est_body_vy,est_body_vz,position_error,\
gyro_bias_x,gyro_bias_y,gyro_bias_z,accel_bias_x,accel_bias_y,accel_bias_z,nees,nees_dof";

pub fn trial_row(r: &Row) -> String {
    let mut v = vec![r.t];
    v.extend(r.true_rpy.iter());
    v.extend(r.est_rpy.iter());
    v.extend(r.true_body_vel.iter());
    v.extend(r.est_body_vel.iter());
    v.push(r.position_error);
    v.extend(r.gyro_bias.iter());
    v.extend(r.accel_bias.iter());
    v.push(r.nees);
    format!("{},{}", floats(v), r.nees_dof)
}

pub fn write_trial<W: Write>(out: &mut W, record: &TrialRecord) -> io::Result<()> {
    writeln!(out, "{TRIAL_HEADER}")?;
    for row in &record.rows {
        writeln!(out, "{}", trial_row(row))?;
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str = "filter,trials,converged,converged_fraction,diverged,median_time,q25_time,q75_time,\
iqr_time,rms_roll_deg,rms_pitch_deg,rms_body_velocity";

pub fn summary_row(s: &FilterSummary) -> String {
    let e = &s.final_errors;
    format!(
        "{},{},{},{},{},{}",
        s.filter,
        s.trials,
        s.converged,
        float(s.converged_fraction()),
        s.diverged,
        floats([s.median_time, s.q25_time, s.q75_time, s.iqr(), e.roll_deg, e.pitch_deg, e.velocity])
    )
}

pub fn write_summary<W: Write>(out: &mut W, result: &ExperimentResult) -> io::Result<()> {
    writeln!(out, "{SUMMARY_HEADER}")?;
    for s in &result.summaries {
        writeln!(out, "{}", summary_row(s))?;
    }
    Ok(())
}

pub fn write_convergence<W: Write>(out: &mut W, result: &ExperimentResult) -> io::Result<()> {
    writeln!(out, "trial,seed,filter,converged,convergence_time,diverged")?;
    for o in &result.outcomes {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            o.trial,
            o.seed,
            o.filter,
            o.convergence_time.is_some(),
            float(o.convergence_time.unwrap_or(f64::INFINITY)),
            text(o.diverged.as_deref().unwrap_or(""))
        )?;
    }
    Ok(())
}

pub fn trial_file_name(record: &TrialRecord) -> String {
    format!("trial_{:04}_{}.csv", record.trial, record.filter)
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> io::Result<()>) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    body(&mut w)?;
    w.flush()
}

/// Writes the full output tree of a run into `dir`.
pub fn write_run(dir: &Path, config: &ExperimentConfig, result: &ExperimentResult) -> io::Result<()> {
    let trials = dir.join("trials");
    fs::create_dir_all(&trials)?;
    fs::write(dir.join("config.toml"), config.to_file().to_toml())?;
    write_file(&dir.join("summary.csv"), |w| write_summary(w, result))?;
    write_file(&dir.join("convergence.csv"), |w| write_convergence(w, result))?;
    for record in &result.records {
        write_file(&trials.join(trial_file_name(record)), |w| write_trial(w, record))?;
    }
    Ok(())
}

pub const STREAM_HEADER: &str = "t,kind,leg,in_contact,gyro_x,gyro_y,gyro_z,accel_x,accel_y,accel_z,\
left_hip_roll,left_hip_pitch,left_knee,right_hip_roll,right_hip_pitch,right_knee";

/// One line per event. Columns that do not apply to an event are empty.
pub fn write_stream<W: Write>(out: &mut W, stream: &SensorStream) -> io::Result<()> {
    writeln!(out, "{STREAM_HEADER}")?;
    for event in stream {
        let t = float(event.timestamp());
        match event {
            SensorEvent::Contact(c) => {
                writeln!(out, "{t},contact,{},{},,,,,,,,,,,,", c.leg, u8::from(c.in_contact))?
            }
            SensorEvent::Encoder(e) => writeln!(
                out,
                "{t},encoder,,,,,,,,,{}",
                floats(e.angles.iter().flat_map(|a| a.iter().copied()))
            )?,
            SensorEvent::Imu(i) => writeln!(
                out,
                "{t},imu,,,{},,,,,,",
                floats(i.gyro.iter().chain(i.accel.iter()).copied())
            )?,
        }
    }
    Ok(())
}
