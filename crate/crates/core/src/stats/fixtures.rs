use super::GroupStat;
use crate::error::{Error, Result};

pub const FIXTURE_NAMES: [&str; 3] = ["table1", "table2", "table3"];

type Block = (&'static str, [(u64, f64, f64); 4]);

const TABLE1: [Block; 3] = [
    ("ResNet20-W16", [(16, 15.86, 0.71), (32, 19.15, 1.96), (64, 18.38, 1.70), (128, 14.53, 1.30)]),
    ("ResNet20-W32", [(16, 13.37, 1.33), (32, 14.03, 0.59), (64, 13.26, 0.50), (128, 11.76, 1.12)]),
    ("ResNet20-W64", [(16, 10.66, 0.69), (32, 10.17, 0.00), (64, 10.17, 0.00), (128, 9.39, 0.25)]),
];

const TABLE2: [Block; 3] = [
    ("ResNet20-W8", [(16, 6.32, 0.23), (32, 7.73, 0.00), (64, 9.64, 0.86), (128, 70.85, 41.22)]),
    ("ResNet20-W16", [(16, 5.43, 0.41), (32, 6.16, 0.11), (64, 23.34, 22.58), (128, 8.87, 0.23)]),
    ("ResNet20-W32", [(16, 4.37, 0.10), (32, 5.18, 0.29), (64, 6.09, 0.29), (128, 9.36, 2.49)]),
];

const TABLE3: [Block; 3] = [
    ("MLP-256-128", [(16, 5.65, 0.09), (32, 5.79, 0.00), (64, 5.79, 0.00), (128, 5.72, 0.09)]),
    ("MLP-512-256", [(16, 5.40, 0.00), (32, 5.40, 0.00), (64, 5.34, 0.08), (128, 5.40, 0.00)]),
    ("MLP-1024-512", [(16, 5.06, 0.00), (32, 5.06, 0.00), (64, 5.06, 0.00), (128, 5.06, 0.00)]),
];

/// Which dimensionality the fixture varies.
pub fn fixture_axis(name: &str) -> Result<&'static str> {
    match name {
        "table1" => Ok("extrinsic"),
        "table2" => Ok("intrinsic"),
        "table3" => Ok("task"),
        other => Err(Error::UnknownFixture(other.to_string())),
    }
}

/// Built-in weights-remaining tables: `table1` (extrinsic), `table2`
/// (intrinsic) and `table3` (task dimensionality).
pub fn fixture(name: &str) -> Result<Vec<GroupStat>> {
    let blocks = match name {
        "table1" => &TABLE1,
        "table2" => &TABLE2,
        "table3" => &TABLE3,
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    Ok(blocks
        .iter()
        .flat_map(|(label, rows)| {
            rows.iter().map(move |&(dimension_value, mean_pct, std_pct)| GroupStat {
                group_label: label.to_string(),
                dimension_value,
                mean_pct,
                std_pct,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_fixture_has_twelve_rows() {
        for name in FIXTURE_NAMES {
            let rows = fixture(name).unwrap();
            assert_eq!(rows.len(), 12);
            assert!(rows.iter().all(|r| r.std_pct >= 0.0));
            fixture_axis(name).unwrap();
        }
        assert!(fixture("table4").is_err());
    }

    #[test]
    fn spot_values() {
        let t2 = fixture("table2").unwrap();
        assert_eq!((t2[3].dimension_value, t2[3].mean_pct, t2[3].std_pct), (128, 70.85, 41.22));
        let t3 = fixture("table3").unwrap();
        assert!(t3[8..].iter().all(|r| r.mean_pct == 5.06 && r.std_pct == 0.0));
    }
}
