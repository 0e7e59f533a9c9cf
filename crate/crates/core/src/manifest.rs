//! Line-delimited dataset manifests.
//!
//! ```text
//! # labelfix-manifest v1 classes=<T> dim=<d> [config=<hash>]
//! <sample_id>\t<group_id>\t<provenance>\t<assigned>\t<true>\t<soft>\t<features>
//! ```
//!
//! Label fields are comma-joined class ids (empty for the empty set), `soft`
//! is empty unless the provenance is `pseudo`, and floats use the shortest
//! representation that parses back to the same value.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::{Dataset, Provenance, Sample};
use crate::error::{Error, Result};
use crate::labels::LabelSet;
use crate::util::sha256_hex;

const MAGIC: &str = "# labelfix-manifest v1";
const FIELDS: usize = 7;

fn join_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v}").expect("writing to a String cannot fail");
    }
}

pub fn manifest_string(ds: &Dataset) -> String {
    let mut out = format!("{MAGIC} classes={} dim={}\n", ds.num_classes(), ds.feature_dim());
    for s in ds.samples() {
        write!(
            out,
            "{}\t{}\t{}\t{}\t{}\t",
            s.sample_id,
            s.group_id,
            s.provenance.as_str(),
            s.assigned_labels,
            s.true_labels
        )
        .expect("writing to a String cannot fail");
        if let Some(soft) = &s.soft_targets {
            join_floats(&mut out, soft);
        }
        out.push('\t');
        join_floats(&mut out, &s.features);
        out.push('\n');
    }
    out
}

/// SHA-256 of the manifest text, used to tie artifacts to their inputs.
pub fn dataset_hash(ds: &Dataset) -> String {
    sha256_hex(manifest_string(ds).as_bytes())
}

pub fn save_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, manifest_string(ds))?;
    Ok(())
}

/// Like [`save_manifest`], with the producing run's config hash in the
/// header. The tag does not change [`dataset_hash`].
pub fn save_manifest_tagged(ds: &Dataset, path: &Path, config_hash: &str) -> Result<()> {
    let text = manifest_string(ds);
    let (header, body) = text.split_once('\n').expect("manifest text always has a header line");
    fs::write(path, format!("{header} config={config_hash}\n{body}"))?;
    Ok(())
}

/// The `config=` tag of a manifest header, if any.
pub fn manifest_config_tag(path: &Path) -> Result<Option<String>> {
    let mut header = String::new();
    BufReader::new(fs::File::open(path)?).read_line(&mut header)?;
    Ok(header.split_whitespace().find_map(|p| p.strip_prefix("config=")).map(str::to_string))
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_manifest(BufReader::new(file))
}

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix(MAGIC)?;
    let mut classes = None;
    let mut dim = None;
    for part in rest.split_whitespace() {
        if let Some(v) = part.strip_prefix("classes=") {
            classes = v.parse().ok();
        } else if let Some(v) = part.strip_prefix("dim=") {
            dim = v.parse().ok();
        }
    }
    Some((classes?, dim?))
}

fn parse_floats(field: &str, expected: usize, what: &str) -> std::result::Result<Vec<f64>, String> {
    let values = field
        .split(',')
        .map(|p| p.parse::<f64>().map_err(|e| format!("bad {what} value {p:?}: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if values.len() != expected {
        return Err(format!("expected {expected} {what} values, found {}", values.len()));
    }
    Ok(values)
}

fn parse_record(line: &str, num_classes: usize, dim: usize) -> std::result::Result<Sample, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != FIELDS {
        return Err(format!("expected {FIELDS} tab-separated fields, found {}", fields.len()));
    }
    let sample_id = fields[0].parse::<u64>().map_err(|e| format!("bad sample_id: {e}"))?;
    let group_id = fields[1].parse::<u64>().map_err(|e| format!("bad group_id: {e}"))?;
    let provenance = Provenance::parse(fields[2]).ok_or_else(|| format!("unknown provenance {:?}", fields[2]))?;
    let labels = |f: &str| -> std::result::Result<LabelSet, String> {
        let set: LabelSet = f.parse().map_err(|e: Error| e.to_string())?;
        if !set.fits(num_classes) {
            return Err(format!("label set {f:?} has ids >= {num_classes}"));
        }
        Ok(set)
    };
    let assigned_labels = labels(fields[3])?;
    let true_labels = labels(fields[4])?;
    let soft_targets = if fields[5].is_empty() {
        None
    } else {
        Some(parse_floats(fields[5], num_classes, "soft target")?)
    };
    let features = if dim == 0 && fields[6].is_empty() { Vec::new() } else { parse_floats(fields[6], dim, "feature")? };
    Ok(Sample { sample_id, group_id, features, assigned_labels, true_labels, provenance, soft_targets })
}

/// Reads a manifest. Every line must end with a newline, so a file cut
/// short anywhere is reported at the line where it ends.
pub fn read_manifest<R: BufRead>(mut reader: R) -> Result<Dataset> {
    let mut header = String::new();
    if reader.read_line(&mut header)? == 0 {
        return Err(Error::Parse { line: 1, message: "missing header".into() });
    }
    let (num_classes, dim) = parse_header(header.trim_end_matches('\n')).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("expected header starting with {MAGIC:?} with classes= and dim="),
    })?;
    let mut samples = Vec::new();
    let mut line = String::new();
    let mut line_no = 1;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let Some(body) = line.strip_suffix('\n') else {
            return Err(Error::Parse { line: line_no, message: "truncated record (no trailing newline)".into() });
        };
        if body.is_empty() {
            continue;
        }
        let sample = parse_record(body, num_classes, dim).map_err(|message| Error::Parse { line: line_no, message })?;
        samples.push(sample);
    }
    Dataset::new(num_classes, dim, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, NoiseSpec};

    #[test]
    fn empty_roundtrip() {
        let ds = Dataset::empty(14, 32).unwrap();
        let back = read_manifest(manifest_string(&ds).as_bytes()).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn pseudo_roundtrip_is_exact() {
        let mut s = generate_synthetic(&NoiseSpec { groups: 2, frames_min: 2, frames_max: 2, ..Default::default() }, 3, 5, 1)
            .unwrap()
            .samples()
            .to_vec();
        s[0].provenance = Provenance::Pseudo;
        s[0].soft_targets = Some(vec![0.1, 1.0 / 3.0, 2e-9, 0.999999999, 0.5]);
        s[1].provenance = Provenance::HumanCorrected;
        s[1].assigned_labels = LabelSet::empty();
        let ds = Dataset::new(5, 3, s).unwrap();
        let text = manifest_string(&ds);
        let back = read_manifest(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(manifest_string(&back), text);
    }

    #[test]
    fn config_tag_roundtrips_without_changing_content() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m");
        let ds = Dataset::empty(4, 2).unwrap();
        save_manifest_tagged(&ds, &path, "abc123").unwrap();
        assert_eq!(manifest_config_tag(&path).unwrap().as_deref(), Some("abc123"));
        assert_eq!(dataset_hash(&load_manifest(&path).unwrap()), dataset_hash(&ds));
        save_manifest(&ds, &path).unwrap();
        assert_eq!(manifest_config_tag(&path).unwrap(), None);
    }

    #[test]
    fn truncated_file_names_line() {
        let ds = generate_synthetic(&NoiseSpec { groups: 3, frames_min: 3, frames_max: 3, ..Default::default() }, 4, 6, 2)
            .unwrap();
        let text = manifest_string(&ds);
        let cut = &text[..text.len() - 10];
        match read_manifest(cut.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 10),
            other => panic!("expected parse error, got {other:?}"),
        }
        let err = read_manifest("garbage\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let bad = format!("{MAGIC} classes=6 dim=1\n0\t0\tweird\t\t\t\t1\n");
        assert!(matches!(read_manifest(bad.as_bytes()), Err(Error::Parse { line: 2, .. })));
    }
}
