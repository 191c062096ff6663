use qgauss::qcore::QParam;
use qgauss::qhermite::*;

fn main() {
    let qq = QParam::new(0.9).unwrap();
    let x = -5.692099788303084f64;
    let y = -x;
    let p = mehler_product(qq, 0.6, x, y, 1e-300).unwrap();
    println!("product = {p}");
    for k in [50, 80, 120, 200, 400, 800] {
        let s = mehler_series(qq, 0.6, x, y, k).unwrap();
        println!("K={k:4}: series={s:.15e}  |s-p|={:.3e}", (s - p).abs());
    }
    // Kahan-style: sum in two passes, positive/negative separately
    let mut pos = 0.0f64; let mut neg = 0.0f64;
    let (mut hx_prev, mut hy_prev, mut hx, mut hy) = (1.0f64, 1.0f64, x, y);
    let (mut rn, mut fact) = (1.0f64, 1.0f64);
    for n in 0..400usize {
        let (hxn, hyn) = if n == 0 { (1.0, 1.0) } else { (hx, hy) };
        let t = rn / fact * hxn * hyn;
        if t >= 0.0 { pos += t } else { neg += t }
        if n >= 1 {
            let qi = qgauss::qcore::q_int(n, qq);
            let hxn2 = x * hx - qi * hx_prev; let hyn2 = y * hy - qi * hy_prev;
            hx_prev = hx; hy_prev = hy; hx = hxn2; hy = hyn2;
        }
        rn *= 0.6; fact *= qgauss::qcore::q_int(n + 1, qq);
    }
    println!("pos={pos}, neg={neg}, pos+neg={}, |s2-p|={:.3e}", pos + neg, (pos + neg - p).abs());
}
