use std::fmt::Write;

use super::GsReport;

/// CSV with columns `i,mrlt_real,mrlt_fake`.
pub fn mrlt_csv(r: &GsReport) -> String {
    let mut s = String::from("i,mrlt_real,mrlt_fake\n");
    for (i, (a, b)) in r.mrlt_real.iter().zip(&r.mrlt_fake).enumerate() {
        let _ = writeln!(s, "{i},{a},{b}");
    }
    s
}

/// Grouped bar chart of both distributions. Bins past the last one with
/// visible mass (> 0.001 in either) are omitted, keeping at least ten.
pub fn mrlt_svg(r: &GsReport) -> String {
    let n = r.mrlt_real.len().min(r.mrlt_fake.len());
    let last = (0..n)
        .rev()
        .find(|&i| r.mrlt_real[i] > 1e-3 || r.mrlt_fake[i] > 1e-3)
        .unwrap_or(0);
    let bins = (last + 1).max(10).min(n);
    let (w, h, left, bottom, top) = (640.0, 360.0, 50.0, 40.0, 30.0);
    let plot_w = w - left - 20.0;
    let plot_h = h - bottom - top;
    let peak = r.mrlt_real[..bins]
        .iter()
        .chain(&r.mrlt_fake[..bins])
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let slot = plot_w / bins as f64;
    let bar = slot * 0.4;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">MRLT (GS = {:.3e})</text>"#,
        w / 2.0,
        r.gs
    );
    let y0 = h - bottom;
    let _ = writeln!(
        s,
        r#"<line x1="{left}" y1="{y0}" x2="{}" y2="{y0}" stroke="black"/>"#,
        w - 20.0
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{top}" x2="{left}" y2="{y0}" stroke="black"/>"#);
    for t in 0..=4 {
        let v = peak * t as f64 / 4.0;
        let y = y0 - plot_h * t as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{v:.2}</text>"#,
            left - 4.0,
            y + 4.0
        );
    }
    for i in 0..bins {
        let x = left + slot * i as f64 + slot * 0.1;
        for (k, (v, color)) in [(r.mrlt_real[i], "#4472c4"), (r.mrlt_fake[i], "#ed7d31")].iter().enumerate() {
            let bh = plot_h * v / peak;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{bar:.2}" height="{bh:.2}" fill="{color}"/>"#,
                x + bar * k as f64,
                y0 - bh
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{}" text-anchor="middle">{i}</text>"#,
            x + bar,
            y0 + 14.0
        );
    }
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="30" width="10" height="10" fill="#4472c4"/><text x="{}" y="39">real</text>"##,
        w - 120.0,
        w - 105.0
    );
    let _ = writeln!(
        s,
        r##"<rect x="{}" y="46" width="10" height="10" fill="#ed7d31"/><text x="{}" y="55">generated</text>"##,
        w - 120.0,
        w - 105.0
    );
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">number of holes i</text>"#, left + plot_w / 2.0, h - 6.0);
    s.push_str("</svg>\n");
    s
}
