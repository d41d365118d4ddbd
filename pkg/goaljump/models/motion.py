from .section import Section


class ReferenceConfigAttributes:
    duration = "duration_s"
    crouch_depth = "crouch_depth_m"
    crouch_duration = "crouch_duration_s"
    pushoff_duration = "pushoff_duration_s"
    liftoff_extension = "liftoff_extension_m"
    apex_pelvis_height = "apex_pelvis_height_m"
    apex_foot_height = "apex_foot_height_m"
    landing_absorption = "landing_absorption_m"
    scale = "scale"
    max_joint_step = "max_joint_step_rad"
    max_height_step = "max_height_step_m"


class ReferenceConfig:
    """
    Shape of the procedural jump-in-place.

    Heights are given at scale 1.0; ``scale`` multiplies the apex heights, crouch depth,
    extension and absorption together.

    :ivar float duration: T_J (s).
    :ivar float crouch_depth: Pelvis drop during the crouch (m).
    :ivar float crouch_duration: Length of the crouch (s).
    :ivar float pushoff_duration: Length of the extension from the crouch to lift-off (s).
    :ivar float liftoff_extension: Pelvis height at lift-off above the standing height (m).
    :ivar float apex_pelvis_height: m.
    :ivar float apex_foot_height: m.
    :ivar float landing_absorption: Pelvis drop below standing height after touchdown (m).
    :ivar float max_joint_step: Largest allowed change of a joint target between samples (rad).
    :ivar float max_height_step: Largest allowed change of a height between samples (m).
    """

    def __init__(self, reference):
        a = ReferenceConfigAttributes
        r = reference if isinstance(reference, Section) else Section(reference, "reference")
        self.duration = r.number(a.duration, positive=True)
        self.scale = r.number(a.scale, positive=True)
        self.crouch_depth = r.number(a.crouch_depth, nonneg=True) * self.scale
        self.crouch_duration = r.number(a.crouch_duration, positive=True)
        self.pushoff_duration = r.number(a.pushoff_duration, positive=True)
        self.liftoff_extension = r.number(a.liftoff_extension, nonneg=True) * self.scale
        self.apex_pelvis_height = r.number(a.apex_pelvis_height, positive=True) * self.scale
        self.apex_foot_height = r.number(a.apex_foot_height, positive=True) * self.scale
        self.landing_absorption = r.number(a.landing_absorption, nonneg=True) * self.scale
        self.max_joint_step = r.number(a.max_joint_step, positive=True)
        self.max_height_step = r.number(a.max_height_step, positive=True)

    def to_key(self) -> dict:
        """A plain dict identifying this configuration, for caching."""
        return dict(vars(self))
