//! Self-describing map archive: a single structured text file embedding the
//! dataset table, its metadata and a grid digest, protected by a content
//! hash so provenance survives copying between machines.

use crate::dataset::{parse_dataset, Dataset};
use crate::error::{Error, Result};
use crate::grid::to_grid;
use sha2::{Digest, Sha256};

const MAGIC: &str = "capmap-archive v1";
const META_SECTION: &str = "== metadata ==";
const TABLE_SECTION: &str = "== table ==";

/// Serialize a dataset into archive text.
pub fn write_archive(ds: &Dataset) -> Result<String> {
    let grid = to_grid(ds)?;
    let digest_line = format!(
        "grid nodes={} populated={} cells={} valid={}",
        grid.node_count(),
        grid.populated_node_count(),
        grid.cell_count(),
        grid.valid_cell_count()
    );
    let payload = format!(
        "{digest_line}\n{META_SECTION}\n{}\n{TABLE_SECTION}\n{}",
        ds.to_metadata_string(),
        ds.to_table_string()
    );
    let hash = hex(&Sha256::digest(payload.as_bytes()));
    Ok(format!("{MAGIC}\nsha256 {hash}\n{payload}"))
}

/// Parse and verify an archive back into its dataset.
pub fn read_archive(text: &str) -> Result<Dataset> {
    let mut lines = text.splitn(3, '\n');
    let magic = lines.next().unwrap_or("");
    if magic.trim_end() != MAGIC {
        return Err(Error::BadArchive(format!(
            "not a capacity-map archive (leading line `{magic}`)"
        )));
    }
    let hash_line = lines.next().unwrap_or("");
    let expected = hash_line
        .trim_end()
        .strip_prefix("sha256 ")
        .ok_or_else(|| Error::BadArchive("missing sha256 line".to_string()))?
        .to_string();
    let payload = lines.next().unwrap_or("");
    let computed = hex(&Sha256::digest(payload.as_bytes()));
    if computed != expected {
        return Err(Error::ArchiveHashMismatch { expected, computed });
    }

    let meta_pos = payload
        .find(META_SECTION)
        .ok_or_else(|| Error::BadArchive("missing metadata section".to_string()))?;
    let table_pos = payload
        .find(TABLE_SECTION)
        .ok_or_else(|| Error::BadArchive("missing table section".to_string()))?;
    if table_pos < meta_pos {
        return Err(Error::BadArchive("sections out of order".to_string()));
    }
    let metadata = &payload[meta_pos + META_SECTION.len()..table_pos];
    let table = &payload[table_pos + TABLE_SECTION.len()..];
    parse_dataset(table.trim_start().as_bytes(), metadata.trim())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{run_campaign, CampaignSpec, SyntheticParams};

    #[test]
    fn archive_roundtrip_preserves_records_bit_exactly() {
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::sparse_survey()).unwrap();
        let text = write_archive(&ds).unwrap();
        let back = read_archive(&text).unwrap();
        assert_eq!(back.records, ds.records);
        assert_eq!(back.meta.platform_id, ds.meta.platform_id);
    }

    #[test]
    fn tampering_is_detected() {
        let ds = run_campaign(&SyntheticParams::default(), &CampaignSpec::sparse_survey()).unwrap();
        let text = write_archive(&ds).unwrap();
        let tampered = text.replacen("0.73", "0.74", 1);
        if tampered != text {
            assert!(matches!(
                read_archive(&tampered),
                Err(Error::ArchiveHashMismatch { .. })
            ));
        }
        assert!(matches!(
            read_archive("not an archive"),
            Err(Error::BadArchive(_))
        ));
    }
}
