//! Plain-text serialisation helpers.

use nalgebra::DMatrix;
use std::fmt::Write;

/// Dense row-major CSV without a header.
pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut s = String::new();
    for row in m.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    s
}

/// CSV with a header row; each record is one line.
pub fn table_to_csv<S: AsRef<str>>(header: &[S], rows: &[Vec<String>]) -> String {
    let mut s = header.iter().map(|h| h.as_ref()).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrix_csv_is_row_major() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let text = matrix_to_csv(&m);
        let back: Vec<Vec<f64>> =
            text.lines().map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
        assert_eq!(back, vec![vec![1.0, 2.0], vec![3.0, 4.0]]);
    }

    #[test]
    fn table_csv_layout() {
        let t = table_to_csv(&["a", "b"], &[vec!["1".into(), "2".into()]]);
        assert_eq!(t, "a,b\n1,2\n");
    }
}
