//! Deterministic text output: fixed 6-significant-digit decimal formatting
//! and the CSV serializations of energy reports and placement tables.

use crate::energy::EnergyReport;
use crate::placement::Placement;

/// Formats a number to 6 significant digits in plain decimal notation.
/// Deterministic for identical inputs, so repeated runs emit identical
/// files.
pub fn format_sig6(value: f64) -> String {
    if value == 0.0 {
        return "0.00000".to_string();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let magnitude = value.abs().log10().floor() as i32;
    let scale = 10f64.powi(5 - magnitude);
    let rounded = (value * scale).round() / scale;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{rounded:.decimals$}")
}

/// Per-device energy rows plus the three aggregate rows.
pub fn energy_csv(report: &EnergyReport) -> String {
    let mut out = String::from("device_id,device_kind,idle_J,proportional_J,total_J\n");
    for (device, energy) in &report.per_device {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            device,
            energy.kind,
            format_sig6(energy.idle_j),
            format_sig6(energy.proportional_j),
            format_sig6(energy.total()),
        ));
    }
    out.push_str(&format!(
        "network_total,,,,{}\n",
        format_sig6(report.network_total)
    ));
    out.push_str(&format!(
        "processing_total,,,,{}\n",
        format_sig6(report.processing_total)
    ));
    out.push_str(&format!(
        "grand_total,,,,{}\n",
        format_sig6(report.grand_total)
    ));
    out
}

/// Assignment table in key order; zero-count rows are omitted.
pub fn placement_csv(placement: &Placement) -> String {
    let mut out = String::from("clinic,bs,primary_node,backup_node,patients\n");
    for (key, &count) in &placement.assignments {
        if count == 0 {
            continue;
        }
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            key.clinic, key.bs, key.primary, key.backup, count
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(format_sig6(19210.1814), "19210.2");
        assert_eq!(format_sig6(0.0081922043), "0.00819220");
        assert_eq!(format_sig6(239.76), "239.760");
        assert_eq!(format_sig6(0.0), "0.00000");
        assert_eq!(format_sig6(3.75e6), "3750000");
        assert_eq!(format_sig6(-4.8057), "-4.80570");
    }
}
