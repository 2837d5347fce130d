//! Dataset persistence: a versioned binary container for training
//! throughput and a CSV export for interchange.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::container;
use crate::error::{Error, Result};
use crate::series::TimeSeries;
use crate::simulators::{Dataset, DatasetManifest, TrialPair};

const MAGIC: &[u8; 4] = b"DSDS";
pub const DATASET_VERSION: u32 = 1;

pub fn write_dataset(ds: &Dataset, w: &mut impl Write) -> Result<()> {
    container::write_magic(w, MAGIC, DATASET_VERSION)?;
    let manifest = serde_json::to_vec(&ds.manifest()).map_err(|e| Error::Format(e.to_string()))?;
    container::write_bytes(w, &manifest)?;
    for trial in &ds.trials {
        container::write_u64(w, trial.generator_seed)?;
        container::write_f64_slice(w, &trial.latent.values)?;
        container::write_f64_slice(w, &trial.observed.values)?;
    }
    Ok(())
}

pub fn read_dataset(r: &mut impl Read) -> Result<Dataset> {
    container::read_magic(r, MAGIC, DATASET_VERSION)?;
    let manifest: DatasetManifest = serde_json::from_slice(&container::read_bytes(r)?)
        .map_err(|e| Error::Format(format!("dataset manifest: {e}")))?;
    let dt = manifest.grid.dt;
    let mut trials = Vec::with_capacity(manifest.count);
    for i in 0..manifest.count {
        let generator_seed = container::read_u64(r)?;
        let latent = TimeSeries::new(dt, container::read_f64_vec(r)?);
        let observed = TimeSeries::new(dt, container::read_f64_vec(r)?);
        if latent.len() != manifest.grid.n || observed.len() != manifest.grid.n {
            return Err(Error::Format(format!(
                "trial {i}: series length does not match the manifest grid"
            )));
        }
        trials.push(TrialPair { latent, observed, generator_seed });
    }
    Ok(Dataset { spec: manifest.spec, master_seed: manifest.master_seed, trials })
}

pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset(ds, &mut w)?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&mut BufReader::new(file))
}

/// CSV interchange export with columns `trial,index,t,latent,observed`.
/// Floats are written in shortest round-trip form, so re-parsing recovers
/// the exact values.
pub fn export_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let grid = ds.spec.grid();
    writeln!(w, "trial,index,t,latent,observed").map_err(|e| Error::io(path, e))?;
    for (i, trial) in ds.trials.iter().enumerate() {
        for j in 0..trial.latent.len() {
            writeln!(
                w,
                "{i},{j},{},{},{}",
                grid.time(j),
                trial.latent.values[j],
                trial.observed.values[j]
            )
            .map_err(|e| Error::io(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::{build_dataset, GeneratorSpec};

    #[test]
    fn container_round_trip_is_bit_exact() {
        let ds = build_dataset(&GeneratorSpec::gp_default(), 4, 7).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        let back = read_dataset(&mut buf.as_slice()).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn truncated_container_is_a_format_error() {
        let ds = build_dataset(&GeneratorSpec::oscillator_gaussian_default(), 2, 7).unwrap();
        let mut buf = Vec::new();
        write_dataset(&ds, &mut buf).unwrap();
        for cut in [2usize, 9, 40, buf.len() - 3] {
            assert!(matches!(read_dataset(&mut &buf[..cut]).unwrap_err(), Error::Format(_)));
        }
    }

    #[test]
    fn csv_export_has_one_row_per_sample() {
        let dir = std::env::temp_dir().join("dynsmooth_test_csv");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("ds.csv");
        let ds = build_dataset(&GeneratorSpec::alpha_default(), 2, 3).unwrap();
        export_csv(&ds, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "trial,index,t,latent,observed");
        assert_eq!(lines.len(), 1 + 2 * 200);
        // Values round-trip through the text form.
        let first: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(first[3].parse::<f64>().unwrap(), ds.trials[0].latent.values[0]);
        std::fs::remove_dir_all(&dir).ok();
    }
}
