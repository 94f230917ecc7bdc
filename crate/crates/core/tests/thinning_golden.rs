//! Thinning against outputs frozen from a reference Lee-thinning implementation.

use vesseltk::skeleton::skeletonize;
use vesseltk::{BinaryVolume, Grid};

struct Case {
    name: String,
    dims: [usize; 3],
    input: Vec<usize>,
    output: Vec<usize>,
}

fn indices(line: &str, tag: &str) -> Vec<usize> {
    let rest = line
        .strip_prefix(tag)
        .unwrap_or_else(|| panic!("expected {tag:?} line, got {line:?}"));
    rest.split_whitespace()
        .map(|t| t.parse().unwrap())
        .collect()
}

fn cases() -> Vec<Case> {
    let text = include_str!("data/thinning_golden.txt");
    let mut lines = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty());
    let mut out = Vec::new();
    while let Some(head) = lines.next() {
        let parts: Vec<&str> = head.split_whitespace().collect();
        assert_eq!(parts[0], "case");
        let dims = [
            parts[2].parse().unwrap(),
            parts[3].parse().unwrap(),
            parts[4].parse().unwrap(),
        ];
        let input = indices(lines.next().unwrap(), "in");
        let output = indices(lines.next().unwrap(), "out");
        out.push(Case {
            name: parts[1].to_string(),
            dims,
            input,
            output,
        });
    }
    out
}

#[test]
fn matches_reference_outputs() {
    let cases = cases();
    assert!(cases.len() >= 25);
    for c in cases {
        let grid = Grid::unit(c.dims).unwrap();
        let mut v = BinaryVolume::empty(grid);
        for &i in &c.input {
            v.data_mut()[i] = true;
        }
        let got: Vec<usize> = skeletonize(&v).foreground().collect();
        assert_eq!(got, c.output, "case {}", c.name);
    }
}

#[test]
fn tube_case_lands_in_expected_range() {
    let tube = cases()
        .into_iter()
        .find(|c| c.name.starts_with("tube"))
        .unwrap();
    assert!((28..=40).contains(&tube.output.len()));
}
