# 核心框架组件: 配置、存储、流水线与守恒检查
