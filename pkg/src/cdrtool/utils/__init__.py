# 工具函数和类: 异常、事件总线、日志配置
