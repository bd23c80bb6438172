//! Central-difference checks of every differentiable op and loss, plus the
//! two closed-form gradient-penalty cases.

use xplore::losses::gradient_penalty;
use xplore::selftest::{composed_gradient_check, gradcheck_config, linear_critic, loss_gradient_checks};
use xplore_tensor::gradcheck::check_op;
use xplore_tensor::nn::OpKind;
use xplore_tensor::Tensor;

fn main() -> xplore::Result<()> {
    for kind in OpKind::ALL {
        let r = check_op(kind, 3, &gradcheck_config(1))?;
        println!("{:<20} {:>4} coords  max rel {:.1e}  {}", kind.name(), r.checked, r.max_rel_error, pass(r.passed()));
    }
    for (name, r) in loss_gradient_checks(1)? {
        println!("{:<20} {:>4} coords  max rel {:.1e}  {}", name, r.checked, r.max_rel_error, pass(r.passed()));
    }
    let (d, g) = composed_gradient_check(1)?;
    println!("{:<20} {:>4} coords  max rel {:.1e}  {}", "L_D", d.checked, d.max_rel_error, pass(d.passed()));
    println!("{:<20} {:>4} coords  max rel {:.1e}  {}", "L_G", g.checked, g.max_rel_error, pass(g.passed()));

    let real = Tensor::new(vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], &[2, 3]);
    let fake = Tensor::new(vec![1.0, -1.0, 0.5, 2.0, 0.0, -3.0], &[2, 3]);
    for slope in [1.0, 2.0, 0.5] {
        let w = vec![0.0, 0.6 * slope, 0.8 * slope];
        let gp = gradient_penalty(linear_critic(w, 2), &real, &fake, 0)?.item();
        println!("linear critic with slope {slope}: gp {gp:.12} (expected {:.12})", (slope - 1.0) * (slope - 1.0));
    }
    Ok(())
}

fn pass(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}
