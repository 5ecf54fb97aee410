//! Analytic kinematics and validity predicates for the Delta robot and the
//! 3-RRS platform. Everything here is a pure function of its inputs.

pub mod delta;
pub mod rrs;
pub mod svd;

pub use delta::{
    delta_arm_points, delta_closure_residual, delta_inverse_kinematics, delta_pin_tip,
    delta_pose_valid, delta_workspace_contains, lowest_axial_pose, DeltaParams, DeltaPose,
    JointAngles3,
};
pub use rrs::{
    platform_joint, rrs_config_valid, rrs_jacobian, rrs_joint_angles, rrs_limb_joint_angle,
    rrs_limb_solution, LimbSolution, RrsConfig, RrsGeometry,
};
pub use svd::{condition_number, min_singular_value, singular_values, SingularValues};
